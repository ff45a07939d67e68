#pragma once

#include "emos/ops.hpp"

#include <span>

namespace emos {

/// G = R^T R for a [T x C] feature map. Invariant to permuting rows (time).
Var gram(Var feature_map);

/// Which dimensions normalize the squared Gram distance.
enum class StyleNormalization {
  /// N = channels, M = frames of the synthesized map: 1 / (2 N M)^2.
  kFeatureMap,
  /// N = M = channels (the Gram matrix's own rows and columns).
  kGram,
};

/// sum((I - G)^2) / (2 N M)^2 with G = R^T R, I = S^T S.
Var style_loss(Var reference, Var synthesized,
               StyleNormalization normalization = StyleNormalization::kFeatureMap);

/// Unit weights reproduce the plain sum of the four terms. A disabled term is
/// never evaluated.
struct LossWeights {
  double tac = 1.0;
  double sty = 1.0;
  double cls_src = 1.0;
  double cls_tgt = 1.0;
  bool use_sty = true;
  bool use_cls_src = true;
  bool use_cls_tgt = true;

  /// The auxiliary network only feeds l_sty and l_cls_tgt.
  bool needs_auxiliary() const { return use_sty || use_cls_tgt; }
};

struct LossBreakdown {
  double l_mel = 0.0;
  double l_stop = 0.0;
  double l_tac = 0.0;  // l_mel + l_stop
  double l_sty = 0.0;
  double l_cls_src = 0.0;
  double l_cls_tgt = 0.0;
  double l_total = 0.0;
};

struct LossTerms {
  Var mel, stop, tac, sty, cls_src, cls_tgt, total;

  LossBreakdown values() const;
};

struct LossInputs {
  Var predicted_mel;
  Var target_mel;
  Var stop_logits;   // optional
  Var stop_targets;  // optional, same shape as stop_logits
  Var reference_map;
  Var synthesized_map;
  Var logits_src;
  Var logits_tgt;
  int label = 0;
};

/// l_total = tac*l_tac + sty*l_sty + cls_src*l_cls_src + cls_tgt*l_cls_tgt,
/// where l_tac is the mel MSE plus the stop-token BCE when stop inputs are
/// given.
LossTerms total_loss(const LossInputs& in, const LossWeights& weights = {});

/// Weighted sum of whichever terms are present.
Var combine_terms(LossTerms& terms, const LossWeights& weights);

}  // namespace emos
