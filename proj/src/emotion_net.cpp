#include "emos/emotion_net.hpp"

#include "emos/errors.hpp"

#include <cmath>

namespace emos {

Index feature_width(Index n_mels) {
  Index width = n_mels;
  for (std::size_t i = 0; i < kReferenceChannels.size(); ++i) width = (width + 1) / 2;
  return kReferenceChannels.back() * width;
}

Classification classify(const Eigen::Ref<const Vector>& logits) {
  Classification out;
  const double peak = logits.maxCoeff();
  const Vector ex = (logits.array() - peak).exp();
  out.probabilities = ex / ex.sum();
  Index best = 0;
  for (Index i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  out.label = static_cast<int>(best);
  return out;
}

EmotionNet::EmotionNet(const std::string& name, Index n_mels, Rng& rng) : n_mels_(n_mels) {
  Index in = 1;
  for (std::size_t i = 0; i < kReferenceChannels.size(); ++i) {
    convs_.emplace_back(name + ".conv" + std::to_string(i), in, kReferenceChannels[i], 3, 2, 1, rng);
    in = kReferenceChannels[i];
  }
  gru_ = GruLayer(name + ".gru", feature_width(n_mels), kReferenceDim, rng);
  projection_ = Linear(name + ".projection", kReferenceDim, kReferenceDim, rng);
  hidden1_ = Linear(name + ".hidden1", kReferenceDim, kEmbeddingDim, rng);
  hidden2_ = Linear(name + ".hidden2", kEmbeddingDim, kEmbeddingDim, rng);
  head_ = Linear(name + ".head", kEmbeddingDim, kNumEmotions, rng);
}

EmotionEncoding EmotionNet::encode(Var mel) {
  if (mel.value().rank() != 2 || mel.cols() != n_mels_) {
    throw DimensionError("EmotionNet::encode: expected [T x " + std::to_string(n_mels_) + "] mel, got " +
                         shape_string(mel.shape()));
  }
  const Index frames = mel.rows();
  if (frames < kTimeReduction) {
    throw ArgumentError("EmotionNet::encode: mel has " + std::to_string(frames) +
                        " frames; pad it to at least 64 with the log floor");
  }
  Tape& tape = mel.tape();
  Var x = reshape(mel, Shape{1, frames, n_mels_});
  for (Conv2dLayer& conv : convs_) x = relu(channel_norm(conv(x)));

  EmotionEncoding out;
  out.feature_map = time_major(x);
  const GruWeights w = gru_.bind(tape);
  Var h = tape.constant(Tensor(Shape{1, kReferenceDim}));
  for (Index t = 0; t < out.feature_map.rows(); ++t) {
    const Index row[] = {t};
    h = gru_cell(select_rows(out.feature_map, row), h, w, t);
  }
  const Var reference = tanh(projection_(h));
  out.embedding = relu(hidden2_(relu(hidden1_(reference))));
  out.logits = head_(out.embedding);
  return out;
}

EmotionEncodingOutput EmotionNet::encode(const RowMatrix& mel) {
  Tape tape;
  tape.set_grad_enabled(false);
  const EmotionEncoding enc = encode(tape.constant(Tensor::matrix(mel)));
  return {enc.embedding.value(), enc.feature_map.value(), enc.logits.value()};
}

std::vector<Parameter*> EmotionNet::parameters() {
  std::vector<Parameter*> out;
  for (Conv2dLayer& conv : convs_) conv.collect(out);
  gru_.collect(out);
  projection_.collect(out);
  hidden1_.collect(out);
  hidden2_.collect(out);
  head_.collect(out);
  return out;
}

}  // namespace emos
