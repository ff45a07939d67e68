#include "emos/emotion_net.hpp"
#include "emos/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace emos;

namespace {

RowMatrix random_mel(Index frames, Index bands, std::uint64_t seed) {
  Rng rng(seed);
  RowMatrix m(frames, bands);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() - 4.0;
  return m;
}

}  // namespace

TEST_CASE("classify picks the largest logit with lowest-index ties") {
  Vector logits = Vector::Zero(7);
  logits[0] = 3.0;
  const Classification c = classify(logits);
  CHECK(c.label == 0);
  CHECK(c.probabilities[0] > 0.7);
  CHECK(c.probabilities[0] == doctest::Approx(std::exp(3.0) / (std::exp(3.0) + 6.0)));
  CHECK(c.probabilities.sum() == doctest::Approx(1.0));
  CHECK(classify(Vector::Ones(7)).label == 0);
  Vector tie = Vector::Zero(7);
  tie[2] = tie[5] = 1.0;
  CHECK(classify(tie).label == 2);
}

TEST_CASE("feature width folds the remaining frequency bins into channels") {
  CHECK(feature_width(80) == 128 * 2);
  CHECK(feature_width(32) == 128);
}

TEST_CASE("encoder output shapes") {
  Rng rng(1);
  EmotionNet net("net", 32, rng);
  for (Index frames : {64, 65, 130}) {
    const EmotionEncodingOutput out = net.encode(random_mel(frames, 32, frames));
    CHECK(out.embedding.shape() == Shape{1, kEmbeddingDim});
    CHECK(out.logits.shape() == Shape{1, kNumEmotions});
    CHECK(out.feature_map.rows() == (frames + 63) / 64);
    CHECK(out.feature_map.cols() == feature_width(32));
    CHECK(out.embedding.flat().minCoeff() >= 0.0);
  }
}

TEST_CASE("encoder preconditions") {
  Rng rng(2);
  EmotionNet net("net", 32, rng);
  try {
    net.encode(random_mel(63, 32, 1));
    FAIL("expected ArgumentError");
  } catch (const ArgumentError& e) {
    CHECK(std::string(e.what()).find("pad") != std::string::npos);
  }
  CHECK_THROWS_AS(net.encode(random_mel(64, 31, 1)), DimensionError);
}

TEST_CASE("encoder is deterministic and instances are independent") {
  Rng a(3), b(3);
  EmotionNet first("net", 32, a);
  EmotionNet second("net", 32, b);
  const RowMatrix mel = random_mel(70, 32, 9);
  CHECK(first.encode(mel).embedding == second.encode(mel).embedding);
  EmotionNet third("net", 32, a);
  CHECK_FALSE(third.encode(mel).embedding == first.encode(mel).embedding);
}

TEST_CASE("gradients reach every parameter") {
  Rng rng(4);
  EmotionNet net("net", 32, rng);
  Tape tape;
  const EmotionEncoding enc = net.encode(tape.constant(Tensor::matrix(random_mel(130, 32, 5))));
  const int label[] = {2};
  tape.backward(add(softmax_cross_entropy(enc.logits, label), sum(enc.feature_map)));
  for (Parameter* p : net.parameters()) {
    INFO(p->name);
    CHECK(p->grad.flat().cwiseAbs().maxCoeff() > 0.0);
  }
}
