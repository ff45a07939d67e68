#include "emos/gradcheck_suite.hpp"

#include "emos/grad_check.hpp"
#include "emos/losses.hpp"
#include "emos/training.hpp"

#include <algorithm>
#include <functional>

namespace emos {

namespace {

Tensor random(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Values with magnitude in [0.1, 1], so kinks at zero stay out of reach.
Tensor away_from_zero(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return t;
}

/// sum(y * C) for a fixed random C, so every output element matters.
Var weighted(Var y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, y.tape().constant(random(y.shape(), rng))));
}

using Builder = std::function<double(Rng&)>;

struct Case {
  std::string name;
  Builder check;
};

/// Checks input `which` of an n-ary op; the other inputs enter as constants.
Builder nary(std::vector<Shape> shapes, Index which, std::function<Var(std::span<const Var>)> op,
             std::function<Tensor(const Shape&, Rng&)> sample = {}) {
  return [=](Rng& rng) {
    std::vector<Tensor> inputs;
    for (const Shape& s : shapes) inputs.push_back(sample ? sample(s, rng) : random(s, rng));
    const std::uint64_t probe = rng.next();
    const auto f = [&](Var x) {
      std::vector<Var> args;
      for (std::size_t i = 0; i < inputs.size(); ++i) {
        args.push_back(static_cast<Index>(i) == which ? x : x.tape().constant(inputs[i]));
      }
      return weighted(op(args), probe);
    };
    return grad_check(f, inputs[static_cast<std::size_t>(which)]);
  };
}

std::vector<Case> op_cases() {
  std::vector<Case> cases;
  const auto both = [&cases](const std::string& name, std::vector<Shape> shapes,
                             std::function<Var(std::span<const Var>)> op) {
    for (Index i = 0; i < static_cast<Index>(shapes.size()); ++i) {
      cases.push_back({name + "/" + std::to_string(i), nary(shapes, i, op)});
    }
  };
  const auto unary = [&cases](const std::string& name, Shape shape, std::function<Var(Var)> op,
                              std::function<Tensor(const Shape&, Rng&)> sample = {}) {
    cases.push_back({name, nary({std::move(shape)}, 0, [op](std::span<const Var> a) { return op(a[0]); }, sample)});
  };

  both("matmul", {{3, 4}, {4, 2}}, [](auto a) { return matmul(a[0], a[1]); });
  unary("transpose", {3, 4}, [](Var x) { return transpose(x); });
  both("add", {{3, 4}, {3, 4}}, [](auto a) { return add(a[0], a[1]); });
  both("sub", {{3, 4}, {3, 4}}, [](auto a) { return sub(a[0], a[1]); });
  both("mul", {{3, 4}, {3, 4}}, [](auto a) { return mul(a[0], a[1]); });
  unary("affine", {3, 4}, [](Var x) { return affine(x, -1.7, 0.3); });
  unary("relu", {3, 4}, [](Var x) { return relu(x); }, away_from_zero);
  unary("tanh", {3, 4}, [](Var x) { return tanh(x); });
  unary("sigmoid", {3, 4}, [](Var x) { return sigmoid(affine(x, 3.0)); });
  unary("sum", {3, 4}, [](Var x) { return affine(sum(mul(x, x)), 0.5); });
  unary("mean", {3, 4}, [](Var x) { return mean(mul(x, x)); });
  both("fully_connected", {{3, 4}, {4, 5}, {5}}, [](auto a) { return fully_connected(a[0], a[1], a[2]); });
  both("concat_cols", {{3, 2}, {3, 4}}, [](auto a) { return concat_cols(a); });
  both("concat_rows", {{2, 3}, {4, 3}}, [](auto a) { return concat_rows(a); });
  unary("slice_cols", {3, 6}, [](Var x) { return slice_cols(x, 1, 3); });
  unary("select_rows", {4, 3}, [](Var x) {
    const Index rows[] = {0, 2, 2, 1, 0};
    return select_rows(x, rows);
  });
  unary("repeat_rows", {1, 5}, [](Var x) { return repeat_rows(x, 4); });
  unary("reshape", {3, 4}, [](Var x) { return reshape(x, Shape{2, 6}); });
  both("conv2d_stride2", {{2, 7, 6}, {3, 2, 3, 3}, {3}}, [](auto a) { return conv2d(a[0], a[1], a[2], 2, 1); });
  both("conv2d_stride1", {{2, 5, 4}, {2, 2, 3, 3}, {2}}, [](auto a) { return conv2d(a[0], a[1], a[2], 1, 0); });
  unary("channel_norm", {3, 4, 5}, [](Var x) { return channel_norm(x); });
  unary("time_major", {3, 4, 5}, [](Var x) { return time_major(x); });
  unary("softmax_cross_entropy", {4, 7}, [](Var x) {
    const int labels[] = {0, 3, 6, 3};
    return softmax_cross_entropy(affine(x, 2.0), labels);
  });
  both("mse", {{5, 3}, {5, 3}}, [](auto a) { return mse(a[0], a[1]); });
  cases.push_back({"bce_with_logits/0", nary({{6, 1}, {6, 1}}, 0,
                                             [](auto a) { return bce_with_logits(affine(a[0], 3.0), a[1]); },
                                             [](const Shape& s, Rng& rng) { return random(s, rng, 0.0, 1.0); })});
  cases.push_back({"bce_with_logits/1", nary({{6, 1}, {6, 1}}, 1,
                                             [](auto a) { return bce_with_logits(affine(a[0], 3.0), a[1]); },
                                             [](const Shape& s, Rng& rng) { return random(s, rng, 0.0, 1.0); })});
  both("additive_attention", {{2, 5}, {8, 5}, {5}}, [](auto a) {
    const Index lengths[] = {4, 2};
    return additive_attention(a[0], a[1], a[2], lengths);
  });
  both("attention_context", {{2, 4}, {8, 3}}, [](auto a) { return attention_context(a[0], a[1]); });
  both("gru_cell", {{2, 3}, {2, 4}, {3, 12}, {4, 8}, {4, 4}, {12}}, [](auto a) {
    return gru_cell(a[0], a[1], GruWeights{a[2], a[3], a[4], a[5]});
  });
  unary("gram", {6, 4}, [](Var x) { return gram(x); });
  both("style_loss", {{6, 4}, {6, 4}}, [](auto a) { return affine(style_loss(a[0], a[1]), 1e3); });
  return cases;
}

/// The training objective on a two-utterance batch, checked on sampled
/// parameter coordinates of a freshly initialized model.
double composite_point(Rng& rng) {
  GeneratorConfig gen;
  gen.seed = rng.next();
  std::vector<CorpusItem> items;
  const int first = static_cast<int>(rng.below(kNumEmotions));
  const int second = static_cast<int>((first + 1 + rng.below(kNumEmotions - 1)) % kNumEmotions);
  items.push_back(generate_item(gen, first, rng.uniform(0.5, 2.5), 0));
  items.push_back(generate_item(gen, second, rng.uniform(0.5, 2.5), 1));
  const CorpusItem* batch[] = {&items[0], &items[1]};

  EmotionalTts model(SynthesizerConfig{}, rng.next());
  const std::vector<Parameter*> params = model.parameters();
  const auto loss = [&](Tape& tape) { return batch_forward(tape, model, batch, LossWeights{}).terms.total; };
  return grad_check_parameters(loss, params, 12, rng);
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, Index points) {
  std::vector<Case> cases = op_cases();
  cases.push_back({"l_total", composite_point});
  std::vector<GradCheckCase> out;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    Rng rng(derive_seed(seed, c));
    GradCheckCase result{cases[c].name, 0.0, points};
    for (Index p = 0; p < points; ++p) result.max_error = std::max(result.max_error, cases[c].check(rng));
    out.push_back(std::move(result));
  }
  return out;
}

}  // namespace emos
