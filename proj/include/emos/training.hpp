#pragma once

#include "emos/corpus.hpp"
#include "emos/losses.hpp"
#include "emos/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace emos {

struct TrainConfig {
  std::uint64_t seed = 1;
  Index batch_size = 8;
  Index steps = 300;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  Index checkpoint_interval = 0;
  LossWeights weights;
  SynthesizerConfig model;

  /// Throws ArgumentError on non-positive sizes or rates.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct StepMetrics {
  Index step = 0;  // 1-based
  LossBreakdown loss;
  double grad_norm = 0.0;  // before clipping
  double clipped_norm = 0.0;
  std::size_t classification_losses = 0;
  std::size_t auxiliary_passes = 0;
};

/// One JSON-lines record.
std::string to_json_line(const StepMetrics& m);

/// Outputs of one batched forward pass.
struct BatchForward {
  LossTerms terms;
  std::size_t auxiliary_passes = 0;
  std::size_t classification_losses = 0;
};

/// Builds the four-term objective for a batch on `tape`. Every utterance is its
/// own reference and the emotion scalar is 1. Per-utterance terms are
/// averaged over the batch; classification terms average over rows.
BatchForward batch_forward(Tape& tape, EmotionalTts& model, std::span<const CorpusItem* const> batch,
                           const LossWeights& weights);

/// Global L2 norm of all parameter gradients.
double gradient_norm(std::span<Parameter* const> params);
/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
double clip_gradients(std::span<Parameter* const> params, double max_norm);

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  explicit AdamOptimizer(std::span<Parameter* const> params);

  void step(std::span<Parameter* const> params, const TrainConfig& config);
  std::int64_t steps() const { return t_; }

  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::uint64_t step = 0;
  nlohmann::json config;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
};

/// "EMOS", u32 version, u64 step, length-prefixed config JSON and RNG
/// state, u32 tensor count, then per tensor: u32 name length, name, u32 rank,
/// u64 dims, f64 data; trailing u64 FNV-1a of everything before it. All
/// little-endian.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a model from a checkpoint's config and parameter tensors.
EmotionalTts model_from_checkpoint(const Checkpoint& checkpoint);

/// Single-threaded optimization loop over the training split.
class Trainer {
 public:
  Trainer(std::vector<CorpusItem> corpus, const TrainConfig& config);
  /// Resumes model, optimizer, sampler and step counter.
  Trainer(std::vector<CorpusItem> corpus, const Checkpoint& checkpoint);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  StepMetrics step();
  /// Runs until `config.steps`, invoking `sink` per step and writing
  /// checkpoints to `checkpoint_dir` every `checkpoint_interval` steps when
  /// a directory is given.
  void run(const std::function<void(const StepMetrics&)>& sink = {},
           const std::filesystem::path& checkpoint_dir = {});

  Checkpoint checkpoint();
  EmotionalTts& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  TrainConfig& config() { return config_; }
  std::uint64_t steps_done() const { return step_; }

 private:
  std::vector<const CorpusItem*> next_batch();

  std::vector<CorpusItem> corpus_;
  std::vector<const CorpusItem*> train_;
  TrainConfig config_;
  EmotionalTts model_;
  std::vector<Parameter*> params_;
  AdamOptimizer optimizer_;
  Rng rng_;
  std::vector<Index> order_;
  Index cursor_ = 0;
  std::uint64_t step_ = 0;
};

}  // namespace emos
