#pragma once

#include "emos/layers.hpp"

#include <array>
#include <string>
#include <vector>

namespace emos {

inline constexpr int kNumEmotions = 7;
inline constexpr std::array<Index, 6> kReferenceChannels = {32, 32, 64, 64, 128, 128};
inline constexpr Index kReferenceDim = 128;
inline constexpr Index kEmbeddingDim = 256;
/// Total time downsampling of the six stride-2 layers.
inline constexpr Index kTimeReduction = 64;

/// Flattened width C of the feature map for a given band count:
/// 128 channels times the remaining frequency bins.
Index feature_width(Index n_mels);

/// Tape-side outputs of one reference-encoder + classifier pass.
struct EmotionEncoding {
  Var embedding;    // [1 x 256], post-ReLU second classifier layer
  Var feature_map;  // [ceil(T/64) x C], last conv layer, time-major
  Var logits;       // [1 x 7]
};

/// Value-side copy of EmotionEncoding.
struct EmotionEncodingOutput {
  Tensor embedding;
  Tensor feature_map;
  Tensor logits;
};

struct Classification {
  int label = 0;
  Vector probabilities;
};

/// Softmax with lowest-index tie-break on the argmax.
Classification classify(const Eigen::Ref<const Vector>& logits);

/// Reference encoder (six 3x3 stride-2 convs with channel normalization and
/// ReLU, a 128-unit GRU, a 128-d projection) followed by the emotion
/// classifier (128 -> 256 -> 256 -> 7). Used for both the embedding network
/// and the auxiliary network; each instance owns its parameters.
class EmotionNet {
 public:
  EmotionNet() = default;
  EmotionNet(const std::string& name, Index n_mels, Rng& rng);

  /// mel: [T x n_mels] with T >= 64.
  EmotionEncoding encode(Var mel);
  EmotionEncodingOutput encode(const RowMatrix& mel);

  Index n_mels() const { return n_mels_; }
  std::vector<Parameter*> parameters();

 private:
  Index n_mels_ = 0;
  std::vector<Conv2dLayer> convs_;
  GruLayer gru_;
  Linear projection_;
  Linear hidden1_;
  Linear hidden2_;
  Linear head_;
};

}  // namespace emos
