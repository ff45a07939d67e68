#pragma once

#include "emos/tensor.hpp"

#include <span>
#include <vector>

namespace emos {

// Differentiable operations recorded on the tape of their inputs. Unless noted,
// "matrix" arguments use the 2-D view of `Tensor::matrix()`.

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise (Hadamard) product.
Var mul(Var a, Var b);
/// scale * a + shift, scalars only.
Var affine(Var a, double scale, double shift = 0.0);

Var relu(Var x);
Var tanh(Var x);
/// Logistic function; inputs clamped to [-40, 40].
Var sigmoid(Var x);

Var sum(Var x);
Var mean(Var x);

/// x * W + b with x: [n x in], W: [in x out], b: [out].
Var fully_connected(Var x, Var weight, Var bias);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var x, Index start, Index count);
/// Gathers rows by index; repeated indices accumulate in the backward pass.
Var select_rows(Var x, std::span<const Index> rows);
/// Tiles a single-row input `count` times.
Var repeat_rows(Var row, Index count);
Var reshape(Var x, Shape shape);

/// 2-D convolution, x: [Cin x H x W], kernel: [Cout x Cin x kh x kw],
/// bias: [Cout]. Zero padding on both spatial axes.
Var conv2d(Var x, Var kernel, Var bias, Index stride, Index pad);

/// Parameter-free normalization over the channel axis of [C x H x W].
Var channel_norm(Var x, double eps = 1e-5);

/// [C x H x W] -> [H x (C*W)]: H becomes time, channel and width merge.
Var time_major(Var x);

/// Mean over rows of -log softmax(logits)[label]. logits: [n x k].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

Var mse(Var a, Var b);

/// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
Var bce_with_logits(Var logits, Var targets);

/// Additive attention weights.
///
/// query: [B x A], keys: [(B*L) x A] (row b*L + l is position l of batch
/// row b), v: [A]. Position l of row b is valid when l < lengths[b].
/// Returns softmax over valid positions of v . tanh(query_b + key_bl),
/// shape [B x L], zero on invalid positions.
Var additive_attention(Var query, Var keys, Var v, std::span<const Index> lengths);

/// Batched weighted sum: out_b = sum_l weights[b, l] * memory[b*L + l].
Var attention_context(Var weights, Var memory);

struct GruWeights {
  Var input;      // [d_in x 3h]  columns: update, reset, candidate
  Var gates;      // [h x 2h]     recurrent part of update, reset
  Var candidate;  // [h x h]      recurrent part of candidate
  Var bias;       // [3h]
};

/// One GRU step on a batch of rows. `step` only labels numeric errors.
///
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + (r * h) Un + bn)
///   h' = (1 - z) * h + z * n
Var gru_cell(Var x, Var h, const GruWeights& w, Index step = 0);

}  // namespace emos
