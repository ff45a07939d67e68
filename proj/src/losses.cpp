#include "emos/losses.hpp"

#include "emos/errors.hpp"

#include <vector>

namespace emos {

Var gram(Var feature_map) {
  if (feature_map.value().rank() != 2 || feature_map.rows() < 1 || feature_map.cols() < 1) {
    throw ArgumentError("gram: expected a non-empty [T x C] map, got " + shape_string(feature_map.shape()));
  }
  const Eigen::Map<const RowMatrix> r = feature_map.value().matrix();
  const Index c = r.cols();
  // One triangle, mirrored, so G is symmetric to the last bit.
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(c, c);
  lower.selfadjointView<Eigen::Lower>().rankUpdate(r.transpose());
  Tensor g(Shape{c, c});
  g.matrix() = lower.selfadjointView<Eigen::Lower>();
  return feature_map.tape().record(std::move(g), {feature_map}, [](BackwardContext& ctx) {
    const auto r = ctx.input(0).matrix();
    const auto up = ctx.grad_out().matrix();
    ctx.grad_in(0).matrix() += r * (up + up.transpose());
  }, "gram");
}

Var style_loss(Var reference, Var synthesized, StyleNormalization normalization) {
  if (reference.cols() != synthesized.cols()) {
    throw DimensionError("style_loss: channel mismatch " + shape_string(reference.shape()) + " vs " +
                         shape_string(synthesized.shape()));
  }
  const Var diff = sub(gram(synthesized), gram(reference));
  const auto channels = static_cast<double>(synthesized.cols());
  const double frames = normalization == StyleNormalization::kFeatureMap
                            ? static_cast<double>(synthesized.rows())
                            : channels;
  const double norm = 2.0 * channels * frames;
  return affine(sum(mul(diff, diff)), 1.0 / (norm * norm));
}

LossBreakdown LossTerms::values() const {
  LossBreakdown b;
  const auto get = [](Var v) { return v.valid() ? v.value().item() : 0.0; };
  b.l_mel = get(mel);
  b.l_stop = get(stop);
  b.l_tac = get(tac);
  b.l_sty = get(sty);
  b.l_cls_src = get(cls_src);
  b.l_cls_tgt = get(cls_tgt);
  b.l_total = get(total);
  return b;
}

Var combine_terms(LossTerms& terms, const LossWeights& weights) {
  terms.tac = terms.stop.valid() ? add(terms.mel, terms.stop) : terms.mel;
  std::vector<Var> parts{weights.tac == 1.0 ? terms.tac : affine(terms.tac, weights.tac)};
  const auto push = [&parts](Var term, bool enabled, double w) {
    if (!enabled || !term.valid()) return;
    parts.push_back(w == 1.0 ? term : affine(term, w));
  };
  push(terms.sty, weights.use_sty, weights.sty);
  push(terms.cls_src, weights.use_cls_src, weights.cls_src);
  push(terms.cls_tgt, weights.use_cls_tgt, weights.cls_tgt);
  Var total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
  terms.total = total;
  return total;
}

LossTerms total_loss(const LossInputs& in, const LossWeights& weights) {
  LossTerms terms;
  terms.mel = mse(in.predicted_mel, in.target_mel);
  if (in.stop_logits.valid()) terms.stop = bce_with_logits(in.stop_logits, in.stop_targets);
  const int labels[] = {in.label};
  if (weights.use_sty) terms.sty = style_loss(in.reference_map, in.synthesized_map);
  if (weights.use_cls_src) terms.cls_src = softmax_cross_entropy(in.logits_src, labels);
  if (weights.use_cls_tgt) terms.cls_tgt = softmax_cross_entropy(in.logits_tgt, labels);
  combine_terms(terms, weights);
  return terms;
}

}  // namespace emos
