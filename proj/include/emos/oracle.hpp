#pragma once

#include "emos/corpus.hpp"

#include <span>

namespace emos {

/// Time-averaged band profile of a mel matrix.
Vector mel_profile(const RowMatrix& mel);

/// Construction-time stand-in for human listeners, fitted on the generator's
/// own signatures.
///
/// Like a listener who knows the sentence, the oracle compares a mel's
/// profile with the neutral rendering of its text. The class is the emotion
/// signature with the highest cosine similarity to that deviation;
/// deviations whose projected strength falls below `gate` are neutral.
/// Projected strength doubles as the strength regressor.
class EmotionOracle {
 public:
  static EmotionOracle fit(const GeneratorConfig& config, Index draws_per_emotion = 20, double gate = 0.25);

  int classify(const RowMatrix& mel, std::span<const int> chars) const;
  /// <profile - neutral(chars), d_label> / |d_label|^2.
  double strength(const RowMatrix& mel, std::span<const int> chars, int label) const;
  /// L2 distance of the profile from the neutral rendering of the text.
  double neutral_distance(const RowMatrix& mel, std::span<const int> chars) const;

  /// Row e is the unit-strength signature profile of emotion e (row 0 zero).
  const RowMatrix& directions() const { return directions_; }
  double gate() const { return gate_; }

 private:
  Vector deviation(const RowMatrix& mel, std::span<const int> chars) const;

  GeneratorConfig config_;
  RowMatrix directions_;
  double gate_ = 0.25;
};

}  // namespace emos
