#include "emos/corpus.hpp"

#include "emos/errors.hpp"
#include "emos/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace emos {

namespace {

constexpr std::uint64_t kVoiceSeed = 0x5EEDC0DE;
constexpr double kBaseLevel = -4.0;

const std::array<EmotionSignature, 7> kSignatures = {{
    {0.00, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},    // neutral
    {0.72, 1.5, 0.4, 3.0, 0.3, 0.3, 0.5},    // happy
    {0.88, 1.5, 0.6, 4.0, 0.4, 0.4, 1.0},    // surprise
    {0.56, 1.5, 0.8, 5.0, 0.2, 0.6, 0.0},    // angry
    {0.32, 1.5, -0.3, 1.0, 0.2, -0.2, -0.5}, // disgust
    {0.44, 1.5, 0.2, 6.0, 0.5, -0.1, 0.0},   // fear
    {0.14, 1.5, -0.8, 1.0, 0.1, -0.5, -1.0}, // sad
}};

double gaussian(double x, double center, double width) {
  const double d = (x - center) / width;
  return std::exp(-0.5 * d * d);
}

/// Spectral shape of one character, fixed across corpora.
struct Voicing {
  std::array<double, 2> centers;
  std::array<double, 2> gains;
};

Voicing voicing(int c) {
  Rng rng(derive_seed(kVoiceSeed, static_cast<std::uint64_t>(c)));
  Voicing v;
  for (std::size_t i = 0; i < 2; ++i) {
    v.centers[i] = rng.uniform(0.05, 0.95);
    v.gains[i] = rng.uniform(1.2, 2.0);
  }
  return v;
}

RowMatrix round_to_float(const RowMatrix& m) {
  return m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

double log_floor() { return std::log(1e-5); }

std::vector<int> encode_text(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size());
  for (char ch : text) {
    const auto pos = kAlphabet.find(ch);
    if (pos == std::string_view::npos) {
      throw VocabularyError(std::string("character '") + ch + "' is not in the vocabulary");
    }
    out.push_back(static_cast<int>(pos));
  }
  return out;
}

std::string decode_text(std::span<const int> chars) {
  std::string out;
  for (int c : chars) {
    if (c < 0 || c >= static_cast<int>(kAlphabet.size())) {
      throw VocabularyError("character index " + std::to_string(c) + " outside vocabulary");
    }
    out.push_back(kAlphabet[static_cast<std::size_t>(c)]);
  }
  return out;
}

const EmotionSignature& signature(int label) {
  if (label < 0 || label >= static_cast<int>(kSignatures.size())) {
    throw ArgumentError("emotion label " + std::to_string(label) + " outside [0, 7)");
  }
  return kSignatures[static_cast<std::size_t>(label)];
}

RowMatrix render_neutral(const GeneratorConfig& config, std::span<const int> chars) {
  if (chars.empty()) throw ArgumentError("render_neutral: empty text");
  const auto length = static_cast<Index>(chars.size());
  const Index bands = config.n_mels;
  const Index frames = std::max<Index>(64, length * config.frames_per_char);
  const double width = 1.5 * static_cast<double>(bands) / 32.0;
  const double top = static_cast<double>(bands - 1);

  RowMatrix base = RowMatrix::Constant(frames, bands, kBaseLevel);
  for (Index t = 0; t < length * config.frames_per_char; ++t) {
    const Index k = t / config.frames_per_char;
    const Index within = t % config.frames_per_char;
    const double envelope = 0.6 + 0.4 * std::sin(std::numbers::pi * (static_cast<double>(within) + 0.5) /
                                                 static_cast<double>(config.frames_per_char));
    const Voicing v = voicing(chars[static_cast<std::size_t>(k)]);
    for (Index b = 0; b < bands; ++b) {
      double level = 0.0;
      for (std::size_t i = 0; i < 2; ++i) {
        level += v.gains[i] * gaussian(static_cast<double>(b), v.centers[i] * top, width);
      }
      base(t, b) += envelope * level;
    }
  }
  return base;
}

GeneratedParts generate_parts(const GeneratorConfig& config, int label, std::uint64_t serial) {
  Rng rng(derive_seed(config.seed, serial));
  GeneratedParts parts;
  const auto length = config.min_chars + static_cast<Index>(rng.below(
                                             static_cast<std::uint64_t>(config.max_chars - config.min_chars + 1)));
  for (Index i = 0; i < length; ++i) {
    parts.chars.push_back(static_cast<int>(rng.below(kAlphabet.size())));
  }

  parts.base = render_neutral(config, parts.chars);
  const Index bands = config.n_mels;
  const Index frames = parts.base.rows();
  const double width = 1.5 * static_cast<double>(bands) / 32.0;
  const double top = static_cast<double>(bands - 1);

  const EmotionSignature& sig = signature(label);
  parts.pattern = RowMatrix::Zero(frames, bands);
  if (label != static_cast<int>(Emotion::kNeutral)) {
    for (Index t = 0; t < frames; ++t) {
      const double u = frames > 1 ? static_cast<double>(t) / static_cast<double>(frames - 1) : 0.0;
      const double modulation =
          1.0 + sig.modulation_depth * std::sin(2.0 * std::numbers::pi * sig.modulation_rate *
                                                static_cast<double>(t) / 64.0);
      const double energy = sig.energy * (1.0 + sig.energy_slope * (2.0 * u - 1.0));
      for (Index b = 0; b < bands; ++b) {
        const double x = static_cast<double>(b);
        parts.pattern(t, b) = sig.band_gain * gaussian(x, sig.band_center * top, width) * modulation +
                              sig.tilt * (x / top - 0.5) + energy;
      }
    }
  }

  parts.noise.resize(frames, bands);
  for (Index i = 0; i < parts.noise.size(); ++i) parts.noise.data()[i] = config.noise * rng.normal();
  return parts;
}

CorpusItem generate_item(const GeneratorConfig& config, int label, double strength, std::uint64_t serial,
                         bool with_noise) {
  const GeneratedParts parts = generate_parts(config, label, serial);
  CorpusItem item;
  item.chars = parts.chars;
  item.label = label;
  item.strength = strength;
  RowMatrix mel = parts.base + strength * parts.pattern;
  if (with_noise) mel += parts.noise;
  item.mel = round_to_float(mel);
  return item;
}

std::vector<CorpusItem> generate_corpus(const GeneratorConfig& config) {
  if (config.n_per_emotion < 10) {
    throw ArgumentError("generate_corpus: n_per_emotion must be at least 10, got " +
                        std::to_string(config.n_per_emotion));
  }
  if (config.neutral_ratio < 1 || config.test_per_emotion < 0 || config.n_mels < 1 || config.min_chars < 1 ||
      config.max_chars < config.min_chars || !(config.strength_min > 0.0) ||
      config.strength_max < config.strength_min || config.strength_max > 3.0) {
    throw ArgumentError("generate_corpus: invalid generator configuration");
  }
  std::vector<CorpusItem> items;
  std::uint64_t serial = 0;
  for (int label = 0; label < 7; ++label) {
    const Index train = label == 0 ? config.n_per_emotion * config.neutral_ratio : config.n_per_emotion;
    for (Index i = 0; i < train + config.test_per_emotion; ++i, ++serial) {
      Rng strength_rng(derive_seed(config.seed ^ 0xA5A5A5A5ULL, serial));
      const double strength = strength_rng.uniform(config.strength_min, config.strength_max);
      CorpusItem item = generate_item(config, label, strength, serial);
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04lld", kEmotionNames[static_cast<std::size_t>(label)].data(),
                    static_cast<long long>(i));
      item.id = id;
      item.split = i < train ? "train" : "test";
      items.push_back(std::move(item));
    }
  }
  return items;
}

std::vector<std::uint8_t> encode_mel(const RowMatrix& mel) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + static_cast<std::size_t>(mel.size()) * 4);
  put_u32(out, static_cast<std::uint32_t>(mel.rows()));
  put_u32(out, static_cast<std::uint32_t>(mel.cols()));
  for (Index i = 0; i < mel.size(); ++i) {
    const auto f = static_cast<float>(mel.data()[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
  }
  return out;
}

RowMatrix decode_mel(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw CorruptionError("mel file shorter than its 8-byte header");
  const std::uint32_t frames = get_u32(bytes.data());
  const std::uint32_t bands = get_u32(bytes.data() + 4);
  const std::size_t expected = 8 + static_cast<std::size_t>(frames) * bands * 4;
  if (bytes.size() != expected) {
    throw CorruptionError("mel file has " + std::to_string(bytes.size()) + " bytes, header implies " +
                          std::to_string(expected));
  }
  RowMatrix mel(frames, bands);
  for (Index i = 0; i < mel.size(); ++i) {
    const std::uint32_t bits = get_u32(bytes.data() + 8 + 4 * i);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    mel.data()[i] = f;
  }
  return mel;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void write_corpus(const std::filesystem::path& dir, std::span<const CorpusItem> items) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "mels", ec);
  if (ec) throw IoError("cannot create " + (dir / "mels").string() + ": " + ec.message());

  std::string manifest;
  for (const CorpusItem& item : items) {
    const std::vector<std::uint8_t> bytes = encode_mel(item.mel);
    const std::string rel = "mels/" + item.id + ".f32";
    write_bytes(dir / rel, bytes);
    const nlohmann::json record = {
        {"id", item.id},
        {"split", item.split},
        {"label", item.label},
        {"emotion", kEmotionNames[static_cast<std::size_t>(item.label)]},
        {"strength", item.strength},
        {"text", decode_text(item.chars)},
        {"mel", rel},
        {"frames", item.mel.rows()},
        {"n_mels", item.mel.cols()},
        {"hash", hex64(fnv1a(bytes))},
    };
    manifest += record.dump() + "\n";
  }
  write_bytes(dir / "manifest.jsonl",
              {reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()});

  std::string vocab;
  for (char c : kAlphabet) vocab += std::string(1, c) + "\n";
  write_bytes(dir / "vocab.txt", {reinterpret_cast<const std::uint8_t*>(vocab.data()), vocab.size()});
}

std::vector<std::string> read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) symbols.push_back(line);
  return symbols;
}

std::vector<CorpusItem> load_corpus(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.jsonl");
  if (!in) throw IoError("cannot open " + (dir / "manifest.jsonl").string());
  std::vector<CorpusItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw CorruptionError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    CorpusItem item;
    try {
      item.id = record.at("id").get<std::string>();
      item.split = record.value("split", std::string("train"));
      item.label = record.at("label").get<int>();
      item.strength = record.at("strength").get<double>();
      item.chars = encode_text(record.at("text").get<std::string>());
      const auto rel = record.at("mel").get<std::string>();
      const std::vector<std::uint8_t> bytes = read_bytes(dir / rel);
      if (hex64(fnv1a(bytes)) != record.at("hash").get<std::string>()) {
        throw CorruptionError("hash mismatch for " + rel);
      }
      item.mel = decode_mel(bytes);
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (item.label < 0 || item.label >= 7) {
      throw CorruptionError("manifest line " + std::to_string(line_no) + ": label out of range");
    }
    items.push_back(std::move(item));
  }
  return items;
}

PaddedBatch make_batch(std::span<const CorpusItem* const> items) {
  if (items.empty()) throw ArgumentError("make_batch: no items");
  const Index bands = items.front()->mel.cols();
  Index longest = 0;
  for (const CorpusItem* item : items) {
    if (item->mel.cols() != bands) throw DimensionError("make_batch: band count differs across items");
    longest = std::max(longest, item->mel.rows());
  }
  const auto batch = static_cast<Index>(items.size());
  PaddedBatch out;
  out.mels = Tensor::full(Shape{batch, longest, bands}, log_floor());
  out.mask = Tensor(Shape{batch, longest});
  for (Index b = 0; b < batch; ++b) {
    const RowMatrix& mel = items[static_cast<std::size_t>(b)]->mel;
    Eigen::Map<RowMatrix>(out.mels.data() + b * longest * bands, longest, bands).topRows(mel.rows()) = mel;
    out.mask.matrix().row(b).head(mel.rows()).setOnes();
    out.lengths.push_back(mel.rows());
  }
  return out;
}

double masked_mse(const Tensor& predicted, const PaddedBatch& batch) {
  if (predicted.shape() != batch.mels.shape()) {
    throw DimensionError("masked_mse: prediction " + shape_string(predicted.shape()) + " vs batch " +
                         shape_string(batch.mels.shape()));
  }
  const Index longest = batch.mels.dim(1), bands = batch.mels.dim(2);
  double total = 0.0;
  for (std::size_t b = 0; b < batch.lengths.size(); ++b) {
    const auto offset = static_cast<Index>(b) * longest * bands;
    const Eigen::Map<const RowMatrix> p(predicted.data() + offset, longest, bands);
    const Eigen::Map<const RowMatrix> t(batch.mels.data() + offset, longest, bands);
    const auto& mask = batch.mask.matrix().row(static_cast<Index>(b));
    double item = 0.0;
    for (Index f = 0; f < longest; ++f) item += mask[f] * (p.row(f) - t.row(f)).squaredNorm();
    total += item / (static_cast<double>(batch.lengths[b]) * static_cast<double>(bands));
  }
  return total / static_cast<double>(batch.lengths.size());
}

std::vector<const CorpusItem*> select_split(std::span<const CorpusItem> items, std::string_view split) {
  std::vector<const CorpusItem*> out;
  for (const CorpusItem& item : items) {
    if (item.split == split) out.push_back(&item);
  }
  return out;
}

}  // namespace emos
