#pragma once

#include "emos/emotion_net.hpp"
#include "emos/synthesizer.hpp"

#include <cstdint>
#include <vector>

namespace emos {

/// Synthesizer plus the embedding network (reads the reference mel) and the
/// auxiliary network (reads the predicted mel). The two emotion networks do
/// not share weights.
struct EmotionalTts {
  Synthesizer synthesizer;
  EmotionNet embedding_net;
  EmotionNet auxiliary_net;

  EmotionalTts() = default;
  EmotionalTts(const SynthesizerConfig& config, std::uint64_t seed);

  Index n_mels() const { return synthesizer.config().n_mels; }
  /// Fixed order: synthesizer, embedding network, auxiliary network.
  std::vector<Parameter*> parameters();
};

}  // namespace emos
