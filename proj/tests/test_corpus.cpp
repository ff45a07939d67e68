#include "emos/corpus.hpp"
#include "emos/errors.hpp"
#include "emos/oracle.hpp"
#include "emos/random.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace emos;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("emos_test_" + name);
  fs::remove_all(p);
  return p;
}

GeneratorConfig balanced() {
  GeneratorConfig c;
  c.neutral_ratio = 1;
  return c;
}

}  // namespace

TEST_CASE("text encoding round trip") {
  const std::string text = "hello, world? it's fine!";
  CHECK(decode_text(encode_text(text)) == text);
  CHECK(kAlphabet.size() == 32);
}

TEST_CASE("corpus sizes, labels and frame bounds") {
  GeneratorConfig c;
  c.test_per_emotion = 2;
  const std::vector<CorpusItem> items = generate_corpus(c);
  CHECK(items.size() == static_cast<std::size_t>(100 + 60 + 7 * 2));
  CHECK(select_split(items, "test").size() == 14);
  for (const CorpusItem& item : items) {
    CHECK(item.mel.rows() >= 64);
    CHECK(item.mel.rows() <= 512);
    CHECK(item.mel.cols() == 32);
    CHECK(item.mel.allFinite());
    CHECK(item.strength > 0.0);
    CHECK(item.strength <= 3.0);
  }
  GeneratorConfig small;
  small.n_per_emotion = 9;
  CHECK_THROWS_AS(generate_corpus(small), ArgumentError);
}

TEST_CASE("same seed writes a byte-identical corpus") {
  const fs::path a = temp_dir("corpus_a"), b = temp_dir("corpus_b");
  write_corpus(a, generate_corpus(balanced()));
  write_corpus(b, generate_corpus(balanced()));
  CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));
  CHECK(slurp(a / "mels" / "angry_0003.f32") == slurp(b / "mels" / "angry_0003.f32"));
  GeneratorConfig other = balanced();
  other.seed = 2;
  const fs::path c = temp_dir("corpus_c");
  write_corpus(c, generate_corpus(other));
  CHECK(slurp(a / "manifest.jsonl") != slurp(c / "manifest.jsonl"));
  fs::remove_all(b);
  fs::remove_all(c);

  const std::vector<CorpusItem> loaded = load_corpus(a);
  const std::vector<CorpusItem> fresh = generate_corpus(balanced());
  REQUIRE(loaded.size() == fresh.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == fresh[i].id);
    CHECK(loaded[i].mel == fresh[i].mel);
    CHECK(loaded[i].chars == fresh[i].chars);
    CHECK(loaded[i].strength == fresh[i].strength);
  }
  CHECK(read_vocabulary(a / "vocab.txt").size() == 32);
  fs::remove_all(a);
}

TEST_CASE("tampered mel files are detected") {
  const fs::path dir = temp_dir("corpus_tamper");
  write_corpus(dir, generate_corpus(balanced()));
  const fs::path victim = dir / "mels" / "sad_0001.f32";
  std::vector<std::uint8_t> bytes = slurp(victim);
  bytes[20] ^= 1;
  std::ofstream(victim, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                 static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_corpus(dir), CorruptionError);
  fs::remove_all(dir);
}

TEST_CASE("mel file codec") {
  RowMatrix m(3, 2);
  m << 1.5, -2.25, 0.0, 3.0, -1.0, 0.125;
  const std::vector<std::uint8_t> bytes = encode_mel(m);
  CHECK(bytes.size() == 8 + 6 * 4);
  CHECK(bytes[0] == 3);
  CHECK(bytes[4] == 2);
  CHECK(decode_mel(bytes) == m);
  std::vector<std::uint8_t> short_bytes(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(decode_mel(short_bytes), CorruptionError);
}

TEST_CASE("zero strength leaves only the base and noise") {
  const GeneratorConfig c;
  const GeneratedParts parts = generate_parts(c, 3, 17);
  const CorpusItem item = generate_item(c, 3, 0.0, 17);
  CHECK((item.mel - (parts.base + parts.noise)).cwiseAbs().maxCoeff() < 1e-5);
  const CorpusItem clean = generate_item(c, 3, 0.0, 17, false);
  CHECK((clean.mel - parts.base).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("distance from the base grows with strength") {
  const GeneratorConfig c;
  for (int label = 1; label < 7; ++label) {
    const RowMatrix base = generate_parts(c, label, 5).base;
    double last = -1.0;
    for (double s : {0.5, 1.5, 2.5}) {
      const double d = (generate_item(c, label, s, 5).mel - base).norm();
      CHECK(d > last);
      last = d;
    }
  }
}

TEST_CASE("oracle classifies generated mels perfectly") {
  const EmotionOracle oracle = EmotionOracle::fit(GeneratorConfig{});
  GeneratorConfig c = balanced();
  c.test_per_emotion = 20;
  for (const CorpusItem& item : generate_corpus(c)) {
    INFO(item.id);
    CHECK(oracle.classify(item.mel, item.chars) == item.label);
  }
}

TEST_CASE("oracle strength regressor increases with latent strength") {
  const GeneratorConfig c;
  const EmotionOracle oracle = EmotionOracle::fit(c);
  for (int label = 1; label < 7; ++label) {
    const auto strength = [&](double s, std::uint64_t serial) {
      const CorpusItem item = generate_item(c, label, s, 1000 + serial);
      return oracle.strength(item.mel, item.chars, label);
    };
    for (std::uint64_t serial = 0; serial < 100; ++serial) {
      const double a = strength(0.5, serial);
      const double b = strength(1.5, serial);
      const double d = strength(2.5, serial);
      CHECK(a < b);
      CHECK(b < d);
    }
  }
  const CorpusItem item = generate_item(c, 1, 1.0, 0);
  CHECK_THROWS_AS(oracle.strength(item.mel, item.chars, 0), ArgumentError);
  CHECK(oracle.strength(item.mel, item.chars, 1) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("padded batches and masks") {
  CorpusItem a, b;
  a.mel = RowMatrix::Constant(64, 4, 1.0);
  b.mel = RowMatrix::Constant(100, 4, 2.0);
  const CorpusItem* items[] = {&a, &b};
  const PaddedBatch batch = make_batch(items);
  CHECK(batch.mels.shape() == Shape{2, 100, 4});
  CHECK(batch.mask.matrix().row(0).sum() == 64.0);
  CHECK(batch.mask.matrix().row(1).sum() == 100.0);
  CHECK(batch.mels[(0 * 100 + 80) * 4] == log_floor());

  const CorpusItem* one[] = {&a};
  CHECK(make_batch(one).mels.shape() == Shape{1, 64, 4});
}

TEST_CASE("masked mse equals the mean of per-item mse") {
  Rng rng(3);
  CorpusItem a, b;
  a.mel = RowMatrix::Random(64, 4);
  b.mel = RowMatrix::Random(90, 4);
  const CorpusItem* items[] = {&a, &b};
  const PaddedBatch batch = make_batch(items);
  Tensor predicted(batch.mels.shape());
  for (Index i = 0; i < predicted.size(); ++i) predicted[i] = rng.normal();
  const auto item_mse = [&](Index k, const RowMatrix& target) {
    Eigen::Map<const RowMatrix> all(predicted.data() + k * 90 * 4, 90, 4);
    return (all.topRows(target.rows()) - target).squaredNorm() / static_cast<double>(target.size());
  };
  const double expected = 0.5 * (item_mse(0, a.mel) + item_mse(1, b.mel));
  CHECK(masked_mse(predicted, batch) == doctest::Approx(expected).epsilon(1e-12));

  Tensor changed = predicted;
  for (Index t = 64; t < 90; ++t) changed[(0 * 90 + t) * 4] = 1e6;
  CHECK(masked_mse(changed, batch) == masked_mse(predicted, batch));
}
