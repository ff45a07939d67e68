#include "emos/inference.hpp"

#include "emos/errors.hpp"

#include <cmath>

namespace emos {

Tensor scale_embedding(const Tensor& embedding, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ArgumentError("emotion scalar must be a positive finite number, got " + std::to_string(alpha));
  }
  Tensor out = embedding;
  out.flat() *= alpha;
  return out;
}

namespace {

TransferResult run_transfer(EmotionalTts& model, const StrengthRequest& request, const EmotionEncodingOutput& ref) {
  TransferResult out;
  out.reference = ref;
  out.scaled_embedding = scale_embedding(ref.embedding, request.alpha);
  if (request.alpha > kStrengthWarnThreshold) {
    out.warnings.push_back({"alpha_above_3",
                            "emotion scalar " + std::to_string(request.alpha) +
                                " exceeds 3; expect exaggerated, degraded emotion",
                            request.alpha});
  }
  out.synthesis = model.synthesizer.synthesize(request.chars, out.scaled_embedding, request.max_frames);
  return out;
}

}  // namespace

TransferResult transfer(EmotionalTts& model, const StrengthRequest& request) {
  return run_transfer(model, request, model.embedding_net.encode(request.reference));
}

Vector pitch_proxy(const RowMatrix& mel) {
  Vector out(mel.rows());
  const Eigen::RowVectorXd bands = Eigen::RowVectorXd::LinSpaced(mel.cols(), 0.0, static_cast<double>(mel.cols() - 1));
  for (Index t = 0; t < mel.rows(); ++t) {
    const Eigen::RowVectorXd energy = mel.row(t).array().exp();
    out[t] = energy.dot(bands) / energy.sum();
  }
  return out;
}

MelFeatures mel_features(const RowMatrix& mel) {
  MelFeatures f;
  f.frames = mel.rows();
  if (mel.size() == 0) return f;
  const Vector pitch = pitch_proxy(mel);
  f.pitch_mean = pitch.mean();
  f.pitch_range = pitch.maxCoeff() - pitch.minCoeff();
  f.energy = mel.mean();
  return f;
}

std::vector<SweepRow> strength_sweep(EmotionalTts& model, const StrengthRequest& request,
                                     std::span<const double> alphas) {
  for (double a : alphas) scale_embedding(Tensor::scalar(0.0), a);
  const EmotionEncodingOutput ref = model.embedding_net.encode(request.reference);
  std::vector<SweepRow> rows;
  for (double a : alphas) {
    StrengthRequest r = request;
    r.alpha = a;
    SweepRow row;
    row.alpha = a;
    row.result = run_transfer(model, r, ref);
    row.features = mel_features(row.result.synthesis.mel);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace emos
