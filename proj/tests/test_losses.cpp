#include "emos/errors.hpp"
#include "emos/losses.hpp"
#include "emos/random.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace emos;

namespace {

Tensor random_map(Index t, Index c, Rng& rng) {
  Tensor m(Shape{t, c});
  for (Index i = 0; i < m.size(); ++i) m[i] = rng.normal();
  return m;
}

/// Entries k/8 for small integers k: every product and partial sum in the
/// Gram computation is exact in double precision.
Tensor dyadic_map(Index t, Index c, Rng& rng) {
  Tensor m(Shape{t, c});
  for (Index i = 0; i < m.size(); ++i) m[i] = static_cast<double>(static_cast<int>(rng.below(33)) - 16) / 8.0;
  return m;
}

double loss(const Tensor& r, const Tensor& s, StyleNormalization n = StyleNormalization::kFeatureMap) {
  Tape tape;
  return style_loss(tape.constant(r), tape.constant(s), n).value().item();
}

}  // namespace

TEST_CASE("style loss worked value") {
  CHECK(std::abs(loss(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 1}})) - 0.125) < 1e-12);
  // N = M = 2 under the Gram reading
  CHECK(std::abs(loss(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 1}}), StyleNormalization::kGram) - 0.03125) <
        1e-12);
}

TEST_CASE("gram is symmetric and positive semidefinite") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    const Tensor g = gram(tape.constant(random_map(1 + trial % 9, 5, rng))).value();
    const RowMatrix m = g.matrix();
    CHECK(m == m.transpose());
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, m.norm()));
  }
}

TEST_CASE("style loss of a map with itself is exactly zero") {
  Rng rng(2);
  const Tensor r = random_map(7, 6, rng);
  CHECK(loss(r, r) == 0.0);
}

TEST_CASE("style loss is invariant to permuting synthesized frames") {
  Rng rng(3);
  const Tensor r = dyadic_map(6, 4, rng);
  const Tensor s = dyadic_map(6, 4, rng);
  std::vector<Index> perm(6);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[4]);
  Tape tape;
  const Tensor shuffled = select_rows(tape.constant(s), perm).value();
  CHECK(loss(r, shuffled) == loss(r, s));
}

TEST_CASE("style loss compares maps of different lengths") {
  Rng rng(4);
  CHECK(loss(random_map(5, 3, rng), random_map(9, 3, rng)) > 0.0);
  CHECK_THROWS_AS(loss(random_map(5, 3, rng), random_map(5, 4, rng)), DimensionError);
}

TEST_CASE("gram rejects an empty map") {
  Tape tape;
  CHECK_THROWS_AS(gram(tape.constant(Tensor(Shape{0, 3}))), ArgumentError);
}

namespace {

LossInputs random_inputs(Tape& tape, Rng& rng) {
  LossInputs in;
  in.predicted_mel = tape.constant(random_map(10, 4, rng));
  in.target_mel = tape.constant(random_map(10, 4, rng));
  Tensor stops(Shape{10, 1});
  stops[9] = 1.0;
  in.stop_logits = tape.constant(random_map(10, 1, rng));
  in.stop_targets = tape.constant(stops);
  in.reference_map = tape.constant(random_map(2, 6, rng));
  in.synthesized_map = tape.constant(random_map(2, 6, rng));
  in.logits_src = tape.constant(random_map(1, 7, rng));
  in.logits_tgt = tape.constant(random_map(1, 7, rng));
  in.label = 4;
  return in;
}

}  // namespace

TEST_CASE("total loss is the sum of its terms") {
  Rng rng(5);
  Tape tape;
  const LossInputs in = random_inputs(tape, rng);
  const LossBreakdown b = total_loss(in).values();
  CHECK(std::abs(b.l_tac - (b.l_mel + b.l_stop)) < 1e-12);
  CHECK(std::abs(b.l_total - (b.l_tac + b.l_sty + b.l_cls_src + b.l_cls_tgt)) < 1e-12);
  CHECK(b.l_sty > 0.0);
  CHECK(b.l_cls_src > 0.0);
}

TEST_CASE("disabled terms are neither computed nor summed") {
  Rng rng(6);
  Tape tape;
  const LossInputs in = random_inputs(tape, rng);
  const LossBreakdown full = total_loss(in).values();
  LossWeights w;
  w.use_sty = w.use_cls_src = w.use_cls_tgt = false;
  const std::size_t before = tape.count("softmax_cross_entropy");
  const LossTerms tac = total_loss(in, w);
  CHECK(tape.count("softmax_cross_entropy") == before);
  CHECK_FALSE(tac.sty.valid());
  CHECK(tac.values().l_total == full.l_tac);

  w.use_cls_tgt = true;
  CHECK(std::abs(total_loss(in, w).values().l_total - (full.l_tac + full.l_cls_tgt)) < 1e-12);
  CHECK(w.needs_auxiliary());
}

TEST_CASE("loss weights scale their terms") {
  Rng rng(7);
  Tape tape;
  const LossInputs in = random_inputs(tape, rng);
  const LossBreakdown unit = total_loss(in).values();
  LossWeights w;
  w.sty = 10.0;
  w.tac = 0.5;
  const double expected = 0.5 * unit.l_tac + 10.0 * unit.l_sty + unit.l_cls_src + unit.l_cls_tgt;
  CHECK(std::abs(total_loss(in, w).values().l_total - expected) < 1e-12);
}
