#include "emos/oracle.hpp"

#include "emos/errors.hpp"

namespace emos {

Vector mel_profile(const RowMatrix& mel) {
  if (mel.rows() == 0) throw ArgumentError("mel_profile: empty mel");
  return mel.colwise().mean().transpose();
}

EmotionOracle EmotionOracle::fit(const GeneratorConfig& config, Index draws_per_emotion, double gate) {
  if (draws_per_emotion < 1) throw ArgumentError("EmotionOracle::fit: need at least one draw");
  // Serials far above any corpus index keep the fitting draw disjoint.
  constexpr std::uint64_t kFitOffset = 1ULL << 40;
  EmotionOracle oracle;
  oracle.config_ = config;
  oracle.gate_ = gate;
  oracle.directions_ = RowMatrix::Zero(kEmotionNames.size(), config.n_mels);
  std::uint64_t serial = kFitOffset;
  for (int label = 1; label < static_cast<int>(kEmotionNames.size()); ++label) {
    for (Index i = 0; i < draws_per_emotion; ++i, ++serial) {
      oracle.directions_.row(label) += mel_profile(generate_parts(config, label, serial).pattern).transpose();
    }
  }
  oracle.directions_ /= static_cast<double>(draws_per_emotion);
  return oracle;
}

Vector EmotionOracle::deviation(const RowMatrix& mel, std::span<const int> chars) const {
  if (mel.cols() != config_.n_mels) throw DimensionError("EmotionOracle: band count mismatch");
  return mel_profile(mel) - mel_profile(render_neutral(config_, chars));
}

double EmotionOracle::strength(const RowMatrix& mel, std::span<const int> chars, int label) const {
  if (label <= 0 || label >= directions_.rows()) {
    throw ArgumentError("EmotionOracle::strength: label must be a non-neutral emotion");
  }
  const Vector d = directions_.row(label).transpose();
  return deviation(mel, chars).dot(d) / d.squaredNorm();
}

double EmotionOracle::neutral_distance(const RowMatrix& mel, std::span<const int> chars) const {
  return deviation(mel, chars).norm();
}

int EmotionOracle::classify(const RowMatrix& mel, std::span<const int> chars) const {
  const Vector dev = deviation(mel, chars);
  const double norm = dev.norm();
  if (norm == 0.0) return 0;
  int best = 1;
  double best_cos = -2.0;
  for (int e = 1; e < directions_.rows(); ++e) {
    const Vector d = directions_.row(e).transpose();
    const double cos = dev.dot(d) / (norm * d.norm());
    if (cos > best_cos) {
      best_cos = cos;
      best = e;
    }
  }
  const Vector d = directions_.row(best).transpose();
  return dev.dot(d) / d.squaredNorm() < gate_ ? 0 : best;
}

}  // namespace emos
