#include "emos/errors.hpp"
#include "emos/eval.hpp"
#include "emos/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace emos;

TEST_CASE("confusion matrix arithmetic") {
  ConfusionMatrix m = emotion_confusion_matrix();
  CHECK(m.labels.size() == 7);
  m.add(1, 1);
  m.add(1, 1);
  m.add(1, 2);
  m.add(2, 2);
  m.add(3, 0);
  CHECK(m.total() == 5.0);
  const RowMatrix n = m.normalized();
  CHECK(n.row(1).sum() == doctest::Approx(1.0));
  CHECK(n.row(4).sum() == 0.0);
  CHECK(n(1, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(m.macro_accuracy() == doctest::Approx((2.0 / 3.0 + 1.0 + 0.0) / 3.0));
  CHECK_THROWS(m.add(7, 0));
  const std::string csv = m.to_csv(false);
  CHECK(csv.find("neutral") != std::string::npos);
}

TEST_CASE("oracle confusion on generator output is diagonal") {
  GeneratorConfig g;
  g.neutral_ratio = 1;
  const std::vector<CorpusItem> items = generate_corpus(g);
  const std::vector<const CorpusItem*> all = select_split(items, "train");
  const ConfusionMatrix m = oracle_confusion(all, EmotionOracle::fit(GeneratorConfig{}));
  CHECK(m.macro_accuracy() == 1.0);
  CHECK(m.total() == 70.0);
}

TEST_CASE("stable ranks") {
  const double v[] = {3.0, 1.0, 2.0, 1.0};
  CHECK(ranks(v) == std::vector<Index>{3, 0, 2, 1});
}

TEST_CASE("strength ordering of generator mels is perfect") {
  const GeneratorConfig g;
  const EmotionOracle oracle = EmotionOracle::fit(g);
  const double alphas[] = {0.5, 1.0, 1.5, 2.5};
  std::vector<SweepSample> samples;
  for (int label = 1; label < 7; ++label) {
    for (std::uint64_t serial = 0; serial < 5; ++serial) {
      for (double a : alphas) {
        SweepSample s;
        s.label = label;
        s.alpha = a;
        s.text_id = std::to_string(serial);
        CorpusItem item = generate_item(g, label, a, 500 + serial);
        s.mel = std::move(item.mel);
        s.chars = std::move(item.chars);
        samples.push_back(std::move(s));
      }
    }
  }
  const StrengthOrdering o = strength_ordering(samples, alphas, oracle);
  CHECK(o.emotions_ordered() == 6);
  CHECK(o.pairwise_accuracy == 1.0);
  for (const RowMatrix& m : o.matrices) CHECK(m.trace() == m.sum());

  const NeutralShift shift = neutral_shift(samples, 0.5, 1.0, oracle);
  CHECK(shift.emotions_closer() == 6);

  const double unsorted[] = {1.0, 0.5};
  CHECK_THROWS_AS(strength_ordering(samples, unsorted, oracle), ArgumentError);
}

TEST_CASE("projection onto a plane") {
  Rng rng(2);
  RowMatrix x(40, 5);
  const Eigen::RowVectorXd u = (Eigen::RowVectorXd(5) << 2, 1, 0, 0, 0).finished().normalized();
  const Eigen::RowVectorXd v = (Eigen::RowVectorXd(5) << 0, 0, 1, -3, 0).finished().normalized();
  for (Index i = 0; i < x.rows(); ++i) x.row(i) = 3.0 * rng.normal() * u + rng.normal() * v;
  const ProjectionPlotData p = project_embeddings(x);
  CHECK(p.explained_variance.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.explained_variance[0] > p.explained_variance[1]);
  const Eigen::Matrix2d gram = p.components.transpose() * p.components;
  CHECK((gram - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  for (Index c = 0; c < 2; ++c) {
    Index arg;
    p.components.col(c).cwiseAbs().maxCoeff(&arg);
    CHECK(p.components(arg, c) > 0.0);
  }

  RowMatrix doubled(80, 5);
  doubled << x, x;
  const ProjectionPlotData q = project_embeddings(doubled);
  CHECK((q.components - p.components).cwiseAbs().maxCoeff() < 1e-9);

  const ProjectionPlotData flat = project_embeddings(RowMatrix::Constant(4, 3, 2.0));
  CHECK(flat.coordinates.cwiseAbs().maxCoeff() == 0.0);
  CHECK(flat.explained_variance.sum() == 0.0);
  CHECK_THROWS_AS(project_embeddings(RowMatrix::Zero(2, 3)), ArgumentError);
}

TEST_CASE("silhouette") {
  RowMatrix pts(4, 1);
  pts << 0.0, 1.0, 10.0, 11.0;
  const int groups[] = {0, 0, 1, 1};
  // a = 1, b = 10 for the outer points and 9 / 10 mean for the inner ones.
  const double expected = 0.5 * ((1.0 - 1.0 / 10.5) + (1.0 - 1.0 / 9.5));
  CHECK(silhouette(pts, groups) == doctest::Approx(expected));
  const int mixed[] = {0, 1, 0, 1};
  CHECK(silhouette(pts, mixed) < 0.0);
  const int single[] = {0, 1, 1, 1};
  CHECK(std::isfinite(silhouette(pts, single)));
}

TEST_CASE("ablation columns") {
  CHECK(kAblationColumns.size() == 5);
  const LossWeights tac = ablation_weights(0);
  CHECK_FALSE(tac.use_sty);
  CHECK_FALSE(tac.use_cls_src);
  CHECK_FALSE(tac.use_cls_tgt);
  const LossWeights full = ablation_weights(4);
  CHECK(full.use_sty);
  CHECK(full.use_cls_src);
  CHECK(full.use_cls_tgt);
  const LossWeights tgt = ablation_weights(1);
  CHECK(tgt.use_cls_tgt);
  CHECK_FALSE(tgt.use_cls_src);
}

namespace {

SynthesizerConfig small_model() {
  SynthesizerConfig m;
  m.char_dim = 8;
  m.prenet = 16;
  m.encoder = 8;
  m.attention = 8;
  m.decoder = 16;
  m.decoder_prenet = 8;
  return m;
}

}  // namespace

TEST_CASE("an untrained model is near chance") {
  GeneratorConfig g;
  g.test_per_emotion = 5;
  const std::vector<CorpusItem> items = generate_corpus(g);
  const std::vector<const CorpusItem*> test = select_split(items, "test");
  EmotionalTts model(small_model(), 8);
  EvalOptions options;
  options.max_frames = 90;
  const ConfusionMatrix m = emotion_confusion(model, test, EmotionOracle::fit(g), options);
  CHECK(m.total() == 35.0);
  // 3 sigma of a binomial proportion at p = 1/7 over 35 trials
  const double sigma = std::sqrt((1.0 / 7.0) * (6.0 / 7.0) / 35.0);
  CHECK(std::abs(m.counts.trace() / m.total() - 1.0 / 7.0) <= 3.0 * sigma);
}

TEST_CASE("empty test set") {
  SynthesizerConfig m;
  m.char_dim = 8;
  m.prenet = 16;
  m.encoder = 8;
  m.attention = 8;
  m.decoder = 16;
  m.decoder_prenet = 8;
  EmotionalTts model(m, 1);
  std::vector<const CorpusItem*> none;
  CHECK_THROWS_AS(emotion_confusion(model, none, EmotionOracle::fit(GeneratorConfig{})), ArgumentError);
}
