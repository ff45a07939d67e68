#pragma once

#include "emos/model.hpp"

#include <span>
#include <string>
#include <vector>

namespace emos {

/// Above this scalar, transfer is reported to overshoot; requests still run.
inline constexpr double kStrengthWarnThreshold = 3.0;

struct StrengthRequest {
  RowMatrix reference;  // [T x n_mels], T >= 64
  std::vector<int> chars;
  double alpha = 1.0;
  Index max_frames = 1000;
};

struct WarningRecord {
  std::string code;
  std::string message;
  double alpha = 0.0;
};

struct TransferResult {
  SynthesisResult synthesis;
  EmotionEncodingOutput reference;  // unscaled
  Tensor scaled_embedding;          // alpha * e
  std::vector<WarningRecord> warnings;
};

/// alpha * e; throws ArgumentError unless alpha > 0.
Tensor scale_embedding(const Tensor& embedding, double alpha);

/// Encodes the reference, scales its embedding and synthesizes `chars`.
TransferResult transfer(EmotionalTts& model, const StrengthRequest& request);

/// Per-frame centroid of mel-band energy, in band units.
Vector pitch_proxy(const RowMatrix& mel);

struct MelFeatures {
  double pitch_mean = 0.0;
  double pitch_range = 0.0;  // max - min of the proxy
  double energy = 0.0;       // mean log-mel
  Index frames = 0;
};

MelFeatures mel_features(const RowMatrix& mel);

struct SweepRow {
  double alpha = 0.0;
  TransferResult result;
  MelFeatures features;
};

/// One transfer per alpha, in the given order; the reference is encoded once.
std::vector<SweepRow> strength_sweep(EmotionalTts& model, const StrengthRequest& request,
                                     std::span<const double> alphas);

}  // namespace emos
