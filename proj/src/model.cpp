#include "emos/model.hpp"

namespace emos {

EmotionalTts::EmotionalTts(const SynthesizerConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1417));
  synthesizer = Synthesizer(config, rng);
  embedding_net = EmotionNet("embedding_net", config.n_mels, rng);
  auxiliary_net = EmotionNet("auxiliary_net", config.n_mels, rng);
}

std::vector<Parameter*> EmotionalTts::parameters() {
  std::vector<Parameter*> out = synthesizer.parameters();
  for (Parameter* p : embedding_net.parameters()) out.push_back(p);
  for (Parameter* p : auxiliary_net.parameters()) out.push_back(p);
  return out;
}

}  // namespace emos
