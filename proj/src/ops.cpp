#include "emos/ops.hpp"

#include "emos/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace emos {

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  out.flat() = x.flat().unaryExpr(f);
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out(Shape{a.rows(), b.cols()});
  out.matrix().noalias() = a.value().matrix() * b.value().matrix();
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_out().matrix();
    if (ctx.needs(0)) ctx.grad_in(0).matrix().noalias() += g * ctx.input(1).matrix().transpose();
    if (ctx.needs(1)) ctx.grad_in(1).matrix().noalias() += ctx.input(0).matrix().transpose() * g;
  }, "matmul");
}

Var transpose(Var a) {
  Tensor out(Shape{a.cols(), a.rows()});
  out.matrix() = a.value().matrix().transpose();
  return a.tape().record(std::move(out), {a}, [](BackwardContext& ctx) {
    ctx.grad_in(0).matrix() += ctx.grad_out().matrix().transpose();
  }, "transpose");
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape(), a.value().flat() + b.value().flat());
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    if (ctx.needs(0)) ctx.grad_in(0).flat() += ctx.grad_out().flat();
    if (ctx.needs(1)) ctx.grad_in(1).flat() += ctx.grad_out().flat();
  }, "add");
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape(), a.value().flat() - b.value().flat());
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    if (ctx.needs(0)) ctx.grad_in(0).flat() += ctx.grad_out().flat();
    if (ctx.needs(1)) ctx.grad_in(1).flat() -= ctx.grad_out().flat();
  }, "sub");
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape(), a.value().flat().cwiseProduct(b.value().flat()));
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto& g = ctx.grad_out().flat();
    if (ctx.needs(0)) ctx.grad_in(0).flat() += g.cwiseProduct(ctx.input(1).flat());
    if (ctx.needs(1)) ctx.grad_in(1).flat() += g.cwiseProduct(ctx.input(0).flat());
  }, "mul");
}

Var affine(Var a, double scale, double shift) {
  Tensor out(a.shape(), (a.value().flat() * scale).array() + shift);
  return a.tape().record(std::move(out), {a}, [scale](BackwardContext& ctx) {
    ctx.grad_in(0).flat() += scale * ctx.grad_out().flat();
  }, "affine");
}

Var relu(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
    const auto& y = ctx.output().flat();
    ctx.grad_in(0).flat().array() += (y.array() > 0.0).select(ctx.grad_out().flat().array(), 0.0);
  }, "relu");
}

Var tanh(Var x) {
  Tensor out = map_values(x.value(), [](double v) { return std::tanh(v); });
  return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
    const auto& y = ctx.output().flat().array();
    ctx.grad_in(0).flat().array() += ctx.grad_out().flat().array() * (1.0 - y.square());
  }, "tanh");
}

Var sigmoid(Var x) {
  Tensor out = map_values(x.value(), [](double v) {
    v = std::clamp(v, -40.0, 40.0);
    return 1.0 / (1.0 + std::exp(-v));
  });
  return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
    const auto& y = ctx.output().flat().array();
    ctx.grad_in(0).flat().array() += ctx.grad_out().flat().array() * y * (1.0 - y);
  }, "sigmoid");
}

Var sum(Var x) {
  return x.tape().record(Tensor::scalar(x.value().flat().sum()), {x}, [](BackwardContext& ctx) {
    ctx.grad_in(0).flat().array() += ctx.grad_out().item();
  }, "sum");
}

Var mean(Var x) {
  const auto n = static_cast<double>(x.value().size());
  if (n == 0) throw ArgumentError("mean of empty tensor");
  return x.tape().record(Tensor::scalar(x.value().flat().sum() / n), {x}, [n](BackwardContext& ctx) {
    ctx.grad_in(0).flat().array() += ctx.grad_out().item() / n;
  }, "mean");
}

Var fully_connected(Var x, Var weight, Var bias) {
  if (x.cols() != weight.rows() || bias.value().size() != weight.cols()) {
    throw DimensionError("fully_connected: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
  }
  Tensor out(Shape{x.rows(), weight.cols()});
  out.matrix().noalias() = x.value().matrix() * weight.value().matrix();
  out.matrix().rowwise() += bias.value().flat().transpose();
  return x.tape().record(std::move(out), {x, weight, bias}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_out().matrix();
    if (ctx.needs(0)) ctx.grad_in(0).matrix().noalias() += g * ctx.input(1).matrix().transpose();
    if (ctx.needs(1)) ctx.grad_in(1).matrix().noalias() += ctx.input(0).matrix().transpose() * g;
    if (ctx.needs(2)) ctx.grad_in(2).flat() += g.colwise().sum().transpose();
  }, "fully_connected");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row count mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    cols += p.cols();
  }
  Tensor out(Shape{rows, cols});
  std::vector<Index> offsets;
  Index offset = 0;
  for (const Var& p : parts) {
    out.matrix().middleCols(offset, p.cols()) = p.value().matrix();
    offsets.push_back(offset);
    offset += p.cols();
  }
  return parts.front().tape().record(
      std::move(out), {parts.begin(), parts.end()},
      [offsets = std::move(offsets)](BackwardContext& ctx) {
        const auto g = ctx.grad_out().matrix();
        for (std::size_t i = 0; i < offsets.size(); ++i) {
          if (!ctx.needs(i)) continue;
          Tensor& gi = ctx.grad_in(i);
          gi.matrix() += g.middleCols(offsets[i], gi.cols());
        }
      },
      "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column count mismatch " +
                           shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()));
    }
    rows += p.rows();
  }
  Tensor out(Shape{rows, cols});
  std::vector<Index> offsets;
  Index offset = 0;
  for (const Var& p : parts) {
    out.matrix().middleRows(offset, p.rows()) = p.value().matrix();
    offsets.push_back(offset);
    offset += p.rows();
  }
  return parts.front().tape().record(
      std::move(out), {parts.begin(), parts.end()},
      [offsets = std::move(offsets)](BackwardContext& ctx) {
        const auto g = ctx.grad_out().matrix();
        for (std::size_t i = 0; i < offsets.size(); ++i) {
          if (!ctx.needs(i)) continue;
          Tensor& gi = ctx.grad_in(i);
          gi.matrix() += g.middleRows(offsets[i], gi.rows());
        }
      },
      "concat_rows");
}

Var slice_cols(Var x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " + shape_string(x.shape()));
  }
  Tensor out(Shape{x.rows(), count});
  out.matrix() = x.value().matrix().middleCols(start, count);
  return x.tape().record(std::move(out), {x}, [start, count](BackwardContext& ctx) {
    ctx.grad_in(0).matrix().middleCols(start, count) += ctx.grad_out().matrix();
  }, "slice_cols");
}

Var select_rows(Var x, std::span<const Index> rows) {
  const auto src = x.value().matrix();
  Tensor out(Shape{static_cast<Index>(rows.size()), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= src.rows()) {
      throw DimensionError("select_rows: row " + std::to_string(rows[i]) + " out of " +
                           shape_string(x.shape()));
    }
    out.matrix().row(static_cast<Index>(i)) = src.row(rows[i]);
  }
  return x.tape().record(std::move(out), {x},
                         [idx = std::vector<Index>(rows.begin(), rows.end())](BackwardContext& ctx) {
                           auto gi = ctx.grad_in(0).matrix();
                           const auto g = ctx.grad_out().matrix();
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             gi.row(idx[i]) += g.row(static_cast<Index>(i));
                           }
                         },
                         "select_rows");
}

Var repeat_rows(Var row, Index count) {
  if (row.rows() != 1) throw DimensionError("repeat_rows: expected one row, got " + shape_string(row.shape()));
  Tensor out(Shape{count, row.cols()});
  out.matrix().rowwise() = row.value().matrix().row(0);
  return row.tape().record(std::move(out), {row}, [](BackwardContext& ctx) {
    ctx.grad_in(0).matrix() += ctx.grad_out().matrix().colwise().sum();
  }, "repeat_rows");
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
    ctx.grad_in(0).flat() += ctx.grad_out().flat();
  }, "reshape");
}

Var conv2d(Var x, Var kernel, Var bias, Index stride, Index pad) {
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  if (xv.rank() != 3 || kv.rank() != 4 || kv.dim(1) != xv.dim(0) || bias.value().size() != kv.dim(0)) {
    throw DimensionError("conv2d: input " + shape_string(xv.shape()) + ", kernel " +
                         shape_string(kv.shape()) + ", bias " + shape_string(bias.shape()));
  }
  if (stride < 1 || pad < 0) throw ArgumentError("conv2d: stride must be >= 1 and pad >= 0");
  const Index cin = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const Index cout = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_string(kv.shape()) + " larger than padded input " +
                         shape_string(xv.shape()) + " with pad " + std::to_string(pad));
  }
  const Index ho = (h + 2 * pad - kh) / stride + 1;
  const Index wo = (w + 2 * pad - kw) / stride + 1;

  RowMatrix cols = RowMatrix::Zero(cin * kh * kw, ho * wo);
  const double* src = xv.data();
  for (Index c = 0; c < cin; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        double* dst = cols.row((c * kh + i) * kw + j).data();
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride - pad + i;
          if (ih < 0 || ih >= h) continue;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride - pad + j;
            if (iw >= 0 && iw < w) dst[oh * wo + ow] = src[(c * h + ih) * w + iw];
          }
        }
      }
    }
  }

  Eigen::Map<const RowMatrix> kmat(kv.data(), cout, cin * kh * kw);
  Tensor out(Shape{cout, ho, wo});
  Eigen::Map<RowMatrix> omat(out.data(), cout, ho * wo);
  omat.noalias() = kmat * cols;
  omat.colwise() += bias.value().flat();

  return x.tape().record(
      std::move(out), {x, kernel, bias},
      [cols = std::move(cols), cin, h, w, cout, kh, kw, ho, wo, stride, pad](BackwardContext& ctx) {
        Eigen::Map<const RowMatrix> g(ctx.grad_out().data(), cout, ho * wo);
        if (ctx.needs(1)) {
          Eigen::Map<RowMatrix> gk(ctx.grad_in(1).data(), cout, cin * kh * kw);
          gk.noalias() += g * cols.transpose();
        }
        if (ctx.needs(2)) ctx.grad_in(2).flat() += g.rowwise().sum();
        if (ctx.needs(0)) {
          Eigen::Map<const RowMatrix> kmat(ctx.input(1).data(), cout, cin * kh * kw);
          const RowMatrix gcols = kmat.transpose() * g;
          double* dst = ctx.grad_in(0).data();
          for (Index c = 0; c < cin; ++c) {
            for (Index i = 0; i < kh; ++i) {
              for (Index j = 0; j < kw; ++j) {
                const double* row = gcols.row((c * kh + i) * kw + j).data();
                for (Index oh = 0; oh < ho; ++oh) {
                  const Index ih = oh * stride - pad + i;
                  if (ih < 0 || ih >= h) continue;
                  for (Index ow = 0; ow < wo; ++ow) {
                    const Index iw = ow * stride - pad + j;
                    if (iw >= 0 && iw < w) dst[(c * h + ih) * w + iw] += row[oh * wo + ow];
                  }
                }
              }
            }
          }
        }
      },
      "conv2d");
}

Var channel_norm(Var x, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("channel_norm: expected [C x H x W], got " + shape_string(xv.shape()));
  const Index c = xv.dim(0);
  const Index p = xv.dim(1) * xv.dim(2);
  Eigen::Map<const RowMatrix> in(xv.data(), c, p);
  const Eigen::RowVectorXd mu = in.colwise().mean();
  RowMatrix centered = in.rowwise() - mu;
  const Eigen::RowVectorXd inv =
      ((centered.array().square().colwise().sum() / static_cast<double>(c)) + eps).rsqrt();
  Tensor out(xv.shape());
  Eigen::Map<RowMatrix> y(out.data(), c, p);
  y = centered.array().rowwise() * inv.array();
  return x.tape().record(std::move(out), {x}, [c, p, inv](BackwardContext& ctx) {
    Eigen::Map<const RowMatrix> g(ctx.grad_out().data(), c, p);
    Eigen::Map<const RowMatrix> y(ctx.output().data(), c, p);
    const Eigen::RowVectorXd g_mean = g.colwise().mean();
    const Eigen::RowVectorXd gy_mean = g.cwiseProduct(y).colwise().mean();
    Eigen::Map<RowMatrix> gx(ctx.grad_in(0).data(), c, p);
    gx.array() += ((g.rowwise() - g_mean).array() - y.array().rowwise() * gy_mean.array()).rowwise() *
                  inv.array();
  }, "channel_norm");
}

Var time_major(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("time_major: expected [C x H x W], got " + shape_string(xv.shape()));
  const Index c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  Tensor out(Shape{h, c * w});
  for (Index ci = 0; ci < c; ++ci) {
    for (Index t = 0; t < h; ++t) {
      for (Index wi = 0; wi < w; ++wi) out[t * c * w + ci * w + wi] = xv[(ci * h + t) * w + wi];
    }
  }
  return x.tape().record(std::move(out), {x}, [c, h, w](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_out();
    Tensor& gx = ctx.grad_in(0);
    for (Index ci = 0; ci < c; ++ci) {
      for (Index t = 0; t < h; ++t) {
        for (Index wi = 0; wi < w; ++wi) gx[(ci * h + t) * w + wi] += g[t * c * w + ci * w + wi];
      }
    }
  }, "time_major");
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const auto z = logits.value().matrix();
  const Index n = z.rows(), k = z.cols();
  if (static_cast<Index>(labels.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(logits.shape()));
  }
  RowMatrix probs(n, k);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= k) {
      throw ArgumentError("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " +
                          std::to_string(k) + ")");
    }
    const double m = z.row(i).maxCoeff();
    const Eigen::RowVectorXd ex = (z.row(i).array() - m).exp();
    const double s = ex.sum();
    probs.row(i) = ex / s;
    loss += m + std::log(s) - z(i, label);
  }
  loss /= static_cast<double>(n);
  return logits.tape().record(
      Tensor::scalar(loss), {logits},
      [probs = std::move(probs), lab = std::vector<int>(labels.begin(), labels.end())](BackwardContext& ctx) {
        const double g = ctx.grad_out().item() / static_cast<double>(probs.rows());
        auto gz = ctx.grad_in(0).matrix();
        for (Index i = 0; i < probs.rows(); ++i) {
          gz.row(i) += g * probs.row(i);
          gz(i, lab[static_cast<std::size_t>(i)]) -= g;
        }
      },
      "softmax_cross_entropy");
}

Var mse(Var a, Var b) {
  require_same_shape("mse", a, b);
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ArgumentError("mse of empty tensors");
  const Vector diff = a.value().flat() - b.value().flat();
  const double loss = diff.squaredNorm() / n;
  return a.tape().record(Tensor::scalar(loss), {a, b}, [diff, n](BackwardContext& ctx) {
    const double g = 2.0 * ctx.grad_out().item() / n;
    if (ctx.needs(0)) ctx.grad_in(0).flat() += g * diff;
    if (ctx.needs(1)) ctx.grad_in(1).flat() -= g * diff;
  }, "mse");
}

Var bce_with_logits(Var logits, Var targets) {
  require_same_shape("bce_with_logits", logits, targets);
  const auto& x = logits.value().flat().array();
  const auto& y = targets.value().flat().array();
  const auto n = static_cast<double>(x.size());
  if (n == 0) throw ArgumentError("bce_with_logits of empty tensors");
  const double loss = (x.max(0.0) - x * y + (-x.abs()).exp().log1p()).sum() / n;
  return logits.tape().record(Tensor::scalar(loss), {logits, targets}, [n](BackwardContext& ctx) {
    const auto& x = ctx.input(0).flat().array();
    const auto& y = ctx.input(1).flat().array();
    const double g = ctx.grad_out().item() / n;
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-x.max(-40.0).min(40.0)).exp());
    if (ctx.needs(0)) ctx.grad_in(0).flat().array() += g * (p - y);
    if (ctx.needs(1)) ctx.grad_in(1).flat().array() -= g * x;
  }, "bce_with_logits");
}

Var additive_attention(Var query, Var keys, Var v, std::span<const Index> lengths) {
  const auto q = query.value().matrix();
  const auto k = keys.value().matrix();
  const auto& vv = v.value().flat();
  const Index batch = q.rows(), dim = q.cols();
  if (static_cast<Index>(lengths.size()) != batch || k.cols() != dim || vv.size() != dim ||
      batch == 0 || k.rows() % batch != 0) {
    throw DimensionError("additive_attention: query " + shape_string(query.shape()) + ", keys " +
                         shape_string(keys.shape()) + ", v " + shape_string(v.shape()) + ", " +
                         std::to_string(lengths.size()) + " lengths");
  }
  const Index len = k.rows() / batch;
  RowMatrix hidden = RowMatrix::Zero(k.rows(), dim);
  Tensor out(Shape{batch, len});
  for (Index b = 0; b < batch; ++b) {
    const Index valid = lengths[static_cast<std::size_t>(b)];
    if (valid < 1 || valid > len) {
      throw ArgumentError("additive_attention: length " + std::to_string(valid) + " outside [1, " +
                          std::to_string(len) + "]");
    }
    auto hb = hidden.middleRows(b * len, valid);
    hb = (k.middleRows(b * len, valid).rowwise() + q.row(b)).array().tanh();
    const Vector scores = hb * vv;
    const double m = scores.maxCoeff();
    const Vector ex = (scores.array() - m).exp();
    out.matrix().row(b).head(valid) = (ex / ex.sum()).transpose();
  }
  return query.tape().record(
      std::move(out), {query, keys, v},
      [hidden = std::move(hidden), len, lens = std::vector<Index>(lengths.begin(), lengths.end())](
          BackwardContext& ctx) {
        const auto w = ctx.output().matrix();
        const auto g = ctx.grad_out().matrix();
        const auto& vv = ctx.input(2).flat();
        const Index batch = w.rows();
        for (Index b = 0; b < batch; ++b) {
          const Index valid = lens[static_cast<std::size_t>(b)];
          const auto wb = w.row(b).head(valid);
          const auto gb = g.row(b).head(valid);
          const double dot = wb.dot(gb);
          const Eigen::RowVectorXd dscore = wb.cwiseProduct(gb).array() - wb.array() * dot;
          const auto hb = hidden.middleRows(b * len, valid);
          if (ctx.needs(2)) ctx.grad_in(2).flat() += hb.transpose() * dscore.transpose();
          if (!ctx.needs(0) && !ctx.needs(1)) continue;
          const RowMatrix dpre =
              ((dscore.transpose() * vv.transpose()).array() * (1.0 - hb.array().square())).matrix();
          if (ctx.needs(0)) ctx.grad_in(0).matrix().row(b) += dpre.colwise().sum();
          if (ctx.needs(1)) ctx.grad_in(1).matrix().middleRows(b * len, valid) += dpre;
        }
      },
      "additive_attention");
}

Var attention_context(Var weights, Var memory) {
  const auto w = weights.value().matrix();
  const auto m = memory.value().matrix();
  const Index batch = w.rows(), len = w.cols();
  if (m.rows() != batch * len) {
    throw DimensionError("attention_context: weights " + shape_string(weights.shape()) + ", memory " +
                         shape_string(memory.shape()));
  }
  Tensor out(Shape{batch, m.cols()});
  for (Index b = 0; b < batch; ++b) {
    out.matrix().row(b).noalias() = w.row(b) * m.middleRows(b * len, len);
  }
  return weights.tape().record(std::move(out), {weights, memory}, [](BackwardContext& ctx) {
    const auto w = ctx.input(0).matrix();
    const auto m = ctx.input(1).matrix();
    const auto g = ctx.grad_out().matrix();
    const Index batch = w.rows(), len = w.cols();
    for (Index b = 0; b < batch; ++b) {
      if (ctx.needs(0)) ctx.grad_in(0).matrix().row(b).noalias() += g.row(b) * m.middleRows(b * len, len).transpose();
      if (ctx.needs(1)) ctx.grad_in(1).matrix().middleRows(b * len, len).noalias() += w.row(b).transpose() * g.row(b);
    }
  }, "attention_context");
}

Var gru_cell(Var x, Var h, const GruWeights& w, Index step) {
  const Index hidden = h.cols();
  if (w.input.rows() != x.cols() || w.input.cols() != 3 * hidden || w.gates.rows() != hidden ||
      w.gates.cols() != 2 * hidden || w.candidate.rows() != hidden || w.candidate.cols() != hidden ||
      w.bias.value().size() != 3 * hidden || x.rows() != h.rows()) {
    throw DimensionError("gru_cell: x " + shape_string(x.shape()) + ", h " + shape_string(h.shape()) +
                         ", W " + shape_string(w.input.shape()) + ", U " + shape_string(w.gates.shape()) +
                         "/" + shape_string(w.candidate.shape()) + ", b " + shape_string(w.bias.shape()));
  }
  const Var xw = fully_connected(x, w.input, w.bias);
  const Var gates = sigmoid(add(slice_cols(xw, 0, 2 * hidden), matmul(h, w.gates)));
  const Var z = slice_cols(gates, 0, hidden);
  const Var r = slice_cols(gates, hidden, hidden);
  const Var cand = tanh(add(slice_cols(xw, 2 * hidden, hidden), matmul(mul(r, h), w.candidate)));
  const Var next = add(mul(affine(z, -1.0, 1.0), h), mul(z, cand));
  if (!next.value().all_finite()) {
    throw NumericError("gru_cell: non-finite state at step " + std::to_string(step));
  }
  return next;
}

}  // namespace emos
