#pragma once

#include "emos/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emos {

enum class Emotion : int { kNeutral = 0, kHappy, kSurprise, kAngry, kDisgust, kFear, kSad };

inline constexpr std::array<std::string_view, 7> kEmotionNames = {
    "neutral", "happy", "surprise", "angry", "disgust", "fear", "sad"};

/// 32-symbol toy alphabet; index = position.
inline constexpr std::string_view kAlphabet = "abcdefghijklmnopqrstuvwxyz .,?!'";

/// Log-mel floor used for padding.
double log_floor();

std::vector<int> encode_text(std::string_view text);
std::string decode_text(std::span<const int> chars);

/// Per-emotion generator parameters, expressed per unit strength.
struct EmotionSignature {
  double band_center = 0.0;  // fraction of the band axis
  double band_gain = 0.0;
  double tilt = 0.0;         // spectral slope across bands
  double modulation_rate = 0.0;  // cycles per 64 frames
  double modulation_depth = 0.0;
  double energy = 0.0;       // envelope amplitude
  double energy_slope = 0.0; // -1 falling .. +1 rising
};

const EmotionSignature& signature(int label);

struct CorpusItem {
  std::string id;
  std::string split = "train";
  std::vector<int> chars;
  RowMatrix mel;  // frames x bands
  int label = 0;
  double strength = 0.0;
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  Index n_per_emotion = 10;
  /// Neutral gets this many times n_per_emotion items.
  Index neutral_ratio = 10;
  Index test_per_emotion = 0;
  double strength_min = 0.5;
  double strength_max = 2.5;
  Index n_mels = 32;
  Index min_chars = 11;
  Index max_chars = 14;
  Index frames_per_char = 6;
  double noise = 0.05;
};

/// The pieces of one generated utterance. mel = base + strength * pattern + noise.
struct GeneratedParts {
  std::vector<int> chars;
  RowMatrix base;
  RowMatrix pattern;  // signature at unit strength
  RowMatrix noise;
};

/// The neutral, noise-free rendering of a text. Depends only on the
/// characters and the frame/band layout, never on the seed.
RowMatrix render_neutral(const GeneratorConfig& config, std::span<const int> chars);

/// Deterministic in (config.seed, serial); independent of label and strength.
GeneratedParts generate_parts(const GeneratorConfig& config, int label, std::uint64_t serial);

/// Builds one item; mel values are rounded to float precision, matching the
/// on-disk format.
CorpusItem generate_item(const GeneratorConfig& config, int label, double strength, std::uint64_t serial,
                         bool with_noise = true);

/// Deterministic given config.seed. Throws ArgumentError when
/// n_per_emotion < 10.
std::vector<CorpusItem> generate_corpus(const GeneratorConfig& config);

/// Writes manifest.jsonl, vocab.txt and mels/<id>.f32 under `dir`.
void write_corpus(const std::filesystem::path& dir, std::span<const CorpusItem> items);

/// Reads and validates a corpus directory. Hash mismatches raise
/// CorruptionError.
std::vector<CorpusItem> load_corpus(const std::filesystem::path& dir);

std::vector<std::string> read_vocabulary(const std::filesystem::path& path);

/// Mel matrix file: u32 frames, u32 bands, then float32 row-major, all
/// little-endian.
std::vector<std::uint8_t> encode_mel(const RowMatrix& mel);
RowMatrix decode_mel(std::span<const std::uint8_t> bytes);

/// FNV-1a 64-bit.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t value);

struct PaddedBatch {
  Tensor mels;  // [B x T_max x bands], padded with log_floor()
  Tensor mask;  // [B x T_max], 1 on real frames
  std::vector<Index> lengths;
};

PaddedBatch make_batch(std::span<const CorpusItem* const> items);

/// Mean over items of the per-item MSE on unmasked frames.
double masked_mse(const Tensor& predicted, const PaddedBatch& batch);

std::vector<const CorpusItem*> select_split(std::span<const CorpusItem> items, std::string_view split);

}  // namespace emos
