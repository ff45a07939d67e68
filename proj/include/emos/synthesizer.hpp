#pragma once

#include "emos/emotion_net.hpp"
#include "emos/layers.hpp"

#include <span>
#include <vector>

namespace emos {

struct SynthesizerConfig {
  Index vocab = 32;
  Index char_dim = 64;
  Index prenet = 128;
  Index encoder = 128;  // per direction
  Index attention = 128;
  Index decoder = 256;
  Index decoder_prenet = 128;
  Index n_mels = 32;
  Index embedding = kEmbeddingDim;

  Index memory_dim() const { return 2 * encoder + embedding; }
};

struct SynthesisResult {
  RowMatrix mel;         // frames x n_mels
  RowMatrix alignment;   // frames x characters
  Vector stop_probabilities;
  bool truncated = false;
};

/// Teacher-forced outputs for one utterance of a batch.
struct DecodedUtterance {
  Var mel;         // [T x n_mels]
  Var stop_logits;  // [T x 1]
  RowMatrix alignment;
};

/// Character-level seq2seq acoustic model: embedding table, two-layer
/// pre-net, bidirectional GRU encoder, additive attention, and a two-layer
/// residual GRU decoder with mel-frame and stop-token projections. The
/// emotion embedding is concatenated to every encoder timestep.
class Synthesizer {
 public:
  Synthesizer() = default;
  Synthesizer(const SynthesizerConfig& config, Rng& rng);

  const SynthesizerConfig& config() const { return config_; }

  /// Batched teacher forcing. `conditioning[b]` is [1 x 256]; `targets[b]`
  /// is [T_b x n_mels]. Output b has exactly T_b frames.
  std::vector<DecodedUtterance> teacher_forced(std::span<const std::vector<int>> chars,
                                               std::span<const RowMatrix> targets,
                                               std::span<const Var> conditioning);

  SynthesisResult forward_teacher_forced(const std::vector<int>& chars, const RowMatrix& target,
                                         const Tensor& conditioning);

  /// Greedy autoregressive decoding; stops after the first frame with stop
  /// probability > 0.5, or at `max_frames` with `truncated` set.
  SynthesisResult synthesize(const std::vector<int>& chars, const Tensor& conditioning,
                             Index max_frames = 1000);

  std::vector<Parameter*> parameters();

 private:
  struct Memory {
    Var values;  // [(B*L) x memory_dim]
    Var keys;    // [(B*L) x attention]
    std::vector<Index> lengths;
  };
  struct State {
    Var h1, h2, context;
  };
  struct StepOutput {
    Var frame, stop;
    Var weights;
  };

  Var encode_text(Tape& tape, const std::vector<int>& chars);
  Memory build_memory(Tape& tape, std::span<const std::vector<int>> chars, std::span<const Var> conditioning);
  State initial_state(Tape& tape, Index batch) const;
  StepOutput step(Var previous, State& state, const Memory& memory, const GruWeights& w1,
                  const GruWeights& w2, Index t);

  SynthesizerConfig config_;
  Parameter embedding_;
  Linear prenet1_, prenet2_;
  GruLayer encoder_forward_, encoder_backward_;
  Parameter memory_key_;
  Linear query_;
  Parameter attention_v_;
  Linear decoder_prenet1_, decoder_prenet2_;
  GruLayer decoder1_, decoder2_;
  Linear frame_, stop_;
};

}  // namespace emos
