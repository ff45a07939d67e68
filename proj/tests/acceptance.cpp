// Acceptance run: one PASS/FAIL line per criterion.
#include "emos/audio.hpp"
#include "emos/errors.hpp"
#include "emos/eval.hpp"
#include "emos/gradcheck_suite.hpp"
#include "emos/random.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace emos;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("EMOS_SEED");
  return env != nullptr && *env != '\0' ? std::stoull(env) : fallback;
}

/// The seeded 70-item corpus (10 per emotion) plus a held-out test split.
GeneratorConfig corpus_config(std::uint64_t seed, Index per_emotion = 10) {
  GeneratorConfig g;
  g.seed = seed;
  g.n_per_emotion = per_emotion;
  g.neutral_ratio = 1;
  g.test_per_emotion = 5;
  return g;
}

/// Training items per emotion for the long transfer runs.
constexpr Index kTransferPerEmotion = 30;

TrainConfig train_config(std::uint64_t seed, Index steps) {
  TrainConfig c;
  c.seed = seed;
  c.steps = steps;
  return c;
}

// 1

Outcome autodiff(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<GradCheckCase> cases = run_gradcheck_suite(seed, 10);
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  std::string worst_name;
  bool ok = true;
  for (const GradCheckCase& c : cases) {
    if (!(c.max_error < 1e-4) || c.points < 10) ok = false;
    if (!(c.max_error <= worst)) {
      worst = c.max_error;
      worst_name = c.name;
    }
  }
  return {ok && elapsed < 120.0,
          fmt("%zu cases x 10 points, worst %.3g (%s), %.1f s", cases.size(), worst, worst_name.c_str(), elapsed)};
}

// 2

Outcome style_invariants(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 2));
  bool symmetric = true, psd = true, self_zero = true, permutation = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto t = static_cast<Index>(1 + rng.below(96));
    const auto c = static_cast<Index>(1 + rng.below(16));
    Tensor r(Shape{t, c});
    for (Index i = 0; i < r.size(); ++i) r[i] = rng.normal();
    Tape tape;
    const RowMatrix g = gram(tape.constant(r)).value().matrix();
    symmetric = symmetric && g == g.transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    psd = psd && eig.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, g.norm());
    self_zero = self_zero && style_loss(tape.constant(r), tape.constant(r)).value().item() == 0.0;

    // Dyadic entries keep every Gram product and sum exact, so reordering
    // the frames cannot change a single bit.
    Tensor d(Shape{t, c}), s(Shape{t + 3, c});
    for (Index i = 0; i < d.size(); ++i) d[i] = static_cast<double>(static_cast<int>(rng.below(33)) - 16) / 8.0;
    for (Index i = 0; i < s.size(); ++i) s[i] = static_cast<double>(static_cast<int>(rng.below(33)) - 16) / 8.0;
    std::vector<Index> perm(static_cast<std::size_t>(t));
    for (Index i = 0; i < t; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (Index i = t - 1; i > 0; --i) {
      std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    }
    Tensor shuffled(Shape{t, c});
    for (Index i = 0; i < t; ++i) shuffled.matrix().row(i) = d.matrix().row(perm[static_cast<std::size_t>(i)]);
    const double a = style_loss(tape.constant(d), tape.constant(s)).value().item();
    const double b = style_loss(tape.constant(shuffled), tape.constant(s)).value().item();
    permutation = permutation && a == b;
  }
  Tape tape;
  const double worked =
      style_loss(tape.constant(Tensor::matrix({{1, 0}})), tape.constant(Tensor::matrix({{0, 1}}))).value().item();
  const bool worked_ok = std::abs(worked - 0.125) < 1e-12;
  return {symmetric && psd && self_zero && permutation && worked_ok,
          fmt("symmetric %d, psd %d, self-zero %d, permutation-exact %d, worked value %.17g", symmetric, psd,
              self_zero, permutation, worked)};
}

// 3

double enabled_sum(const LossBreakdown& full, const LossWeights& w) {
  double sum = full.l_tac;
  if (w.use_sty) sum += full.l_sty;
  if (w.use_cls_src) sum += full.l_cls_src;
  if (w.use_cls_tgt) sum += full.l_cls_tgt;
  return sum;
}

Outcome additivity(std::uint64_t seed, const std::vector<CorpusItem>& corpus) {
  Rng rng(derive_seed(seed, 3));
  const std::vector<const CorpusItem*> pool = select_split(corpus, "train");
  EmotionalTts model(SynthesizerConfig{}, derive_seed(seed, 33));
  double worst_total = 0.0, worst_ablation = 0.0;
  for (int trial = 0; trial < 4; ++trial) {
    std::vector<const CorpusItem*> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(pool[rng.below(pool.size())]);
    Tape full_tape;
    full_tape.set_grad_enabled(false);
    const LossBreakdown full = batch_forward(full_tape, model, batch, LossWeights{}).terms.values();
    worst_total = std::max(worst_total,
                           std::abs(full.l_total - (full.l_tac + full.l_sty + full.l_cls_src + full.l_cls_tgt)));
    for (Index col = 0; col < static_cast<Index>(kAblationColumns.size()); ++col) {
      const LossWeights w = ablation_weights(col);
      Tape tape;
      tape.set_grad_enabled(false);
      const LossBreakdown ablated = batch_forward(tape, model, batch, w).terms.values();
      worst_ablation = std::max(worst_ablation, std::abs(ablated.l_total - enabled_sum(full, w)));
    }
  }
  return {worst_total <= 1e-12 && worst_ablation <= 1e-12,
          fmt("max |l_total - sum| %.3g, max |ablated - sub-sum| %.3g over 4 batches x 5 columns", worst_total,
              worst_ablation)};
}

// 4-7

Outcome training_sanity(const std::vector<CorpusItem>& corpus, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream log(dir / "metrics.jsonl");
  Trainer trainer(corpus, train_config(seed, 300));
  std::vector<double> totals;
  const auto start = std::chrono::steady_clock::now();
  trainer.run([&](const StepMetrics& m) {
    log << to_json_line(m) << '\n';
    totals.push_back(m.loss.l_total);
  });
  const double elapsed = seconds_since(start);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += totals[i] / 10.0;
    last += totals[290 + i] / 10.0;
  }
  const double reduction = 1.0 - last / first;
  return {reduction >= 0.5 && elapsed < 600.0,
          fmt("%zu training items; mean l_total steps 1-10 %.4f, steps 291-300 %.4f, reduction %.1f%%, %.0f s",
              select_split(corpus, "train").size(), first, last, 100.0 * reduction, elapsed)};
}

struct TrainedRun {
  double macro = 0.0;
  Checkpoint checkpoint;
};

TrainedRun train_and_evaluate(const std::vector<CorpusItem>& corpus, const TrainConfig& config,
                              const EmotionOracle& oracle, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream log(dir / "metrics.jsonl");
  Trainer trainer(corpus, config);
  trainer.run([&](const StepMetrics& m) {
    log << to_json_line(m) << '\n';
    if (m.step % 100 == 0) {
      std::cerr << dir.filename().string() << " step " << m.step << " l_total " << m.loss.l_total << '\n';
    }
  });
  TrainedRun run;
  run.checkpoint = trainer.checkpoint();
  save_checkpoint(run.checkpoint, dir / "final.ckpt");
  EvalOptions options;
  options.seed = config.seed;
  const ConfusionMatrix confusion = emotion_confusion(trainer.model(), select_split(corpus, "test"), oracle, options);
  std::ofstream(dir / "confusion.csv") << confusion.to_csv();
  run.macro = confusion.macro_accuracy();
  return run;
}

Outcome norm_homogeneity(EmotionalTts& model, const std::vector<CorpusItem>& corpus) {
  double worst = 0.0;
  for (const CorpusItem* item : select_split(corpus, "test")) {
    const Tensor e = model.embedding_net.encode(item->mel).embedding;
    const double norm = e.flat().norm();
    for (double a : {0.5, 1.5, 2.5}) {
      worst = std::max(worst, std::abs(scale_embedding(e, a).flat().norm() - a * norm) / (a * norm));
    }
  }
  return {worst <= 4 * std::numeric_limits<double>::epsilon(), fmt("max relative deviation %.3g", worst)};
}

// 8

Outcome infrastructure(std::uint64_t seed, const fs::path& work) {
  const GeneratorConfig g = corpus_config(seed);
  const fs::path a = work / "repro_a", b = work / "repro_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_corpus(a, generate_corpus(g));
  write_corpus(b, generate_corpus(g));
  bool corpus_same = true;
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    corpus_same = corpus_same && slurp(entry.path()) == slurp(b / fs::relative(entry.path(), a));
  }

  const std::vector<CorpusItem> corpus = load_corpus(a);
  TrainConfig c = train_config(seed, 6);
  Trainer first(corpus, c), second(corpus, c);
  std::vector<std::string> straight, twin, resumed;
  for (int i = 0; i < 6; ++i) straight.push_back(to_json_line(first.step()));
  for (int i = 0; i < 3; ++i) twin.push_back(to_json_line(second.step()));
  save_checkpoint(second.checkpoint(), work / "mid.ckpt");
  const Checkpoint mid = load_checkpoint(work / "mid.ckpt");
  save_checkpoint(mid, work / "mid_again.ckpt");
  const bool round_trip = slurp(work / "mid.ckpt") == slurp(work / "mid_again.ckpt");
  resumed = twin;
  Trainer tail(corpus, mid);
  for (int i = 0; i < 3; ++i) resumed.push_back(to_json_line(tail.step()));

  save_checkpoint(first.checkpoint(), work / "straight.ckpt");
  save_checkpoint(tail.checkpoint(), work / "resumed.ckpt");
  Trainer again(corpus, c);
  for (int i = 0; i < 6; ++i) again.step();
  save_checkpoint(again.checkpoint(), work / "again.ckpt");
  const bool ckpt_same = slurp(work / "straight.ckpt") == slurp(work / "again.ckpt");
  const bool resume_same = resumed == straight && slurp(work / "resumed.ckpt") == slurp(work / "straight.ckpt");
  fs::remove_all(b);
  return {corpus_same && files > 0 && ckpt_same && round_trip && resume_same,
          fmt("corpus files identical %d (%zu files), checkpoints identical %d, save-load-save identical %d, "
              "resume matches %d",
              corpus_same, files, ckpt_same, round_trip, resume_same)};
}

// 9

std::vector<double> tone(double hz, double seconds, double amplitude = 0.5) {
  std::vector<double> out(static_cast<std::size_t>(seconds * 16000.0));
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(n) / 16000.0);
  }
  return out;
}

Outcome audio_frontend(std::uint64_t seed) {
  const PitchContour p = pitch_contour(tone(220.0, 1.0), 16000.0);
  double worst = p.f0.empty() ? 1e9 : 0.0;
  for (double f : p.f0) worst = std::max(worst, std::abs(f - 220.0));

  const MelConfig mc;
  const MelSpectrogram mel = mel_spectrogram(tone(1000.0, 0.5), mc);
  const Vector centers = mel_center_frequencies(mc);
  Index expected = 0, band = 0;
  (centers.array() - 1000.0).abs().minCoeff(&expected);
  bool band_ok = true;
  for (Index t = 0; t < mel.frames.rows(); ++t) {
    mel.frames.row(t).maxCoeff(&band);
    band_ok = band_ok && band == expected;
  }

  Rng rng(derive_seed(seed, 9));
  std::vector<double> noise(8000);
  for (double& s : noise) s = 0.1 * rng.normal();
  std::vector<double> louder = noise;
  for (double& s : louder) s *= 2.0;
  MelConfig unclamped;
  unclamped.floor = 1e-300;
  const RowMatrix a = mel_spectrogram(noise, unclamped).frames;
  const RowMatrix b = mel_spectrogram(louder, unclamped).frames;
  const double shift = ((b - a).array() - std::log(2.0)).abs().maxCoeff();
  return {worst <= 3.0 && band_ok && shift <= 1e-9,
          fmt("220 Hz max error %.3f Hz over %zu frames, 1 kHz argmax band %lld (expected %lld) on every frame %d, "
              "log 2 shift error %.3g",
              worst, p.f0.size(), static_cast<long long>(band), static_cast<long long>(expected), band_ok, shift)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  std::uint64_t seed = 1;
  std::vector<int> only;
  Index steps = 2000;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--seed", seed, "Seed (EMOS_SEED overrides)");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  app.add_option("--steps", steps, "Steps of the long training runs");
  CLI11_PARSE(app, argc, argv);
  seed = seed_from_env(seed);
  const fs::path dir = work;
  fs::create_directories(dir);
  const auto wanted = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  int failures = 0;
  const auto report = [&](int n, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << o.detail << std::endl;
    if (!o.pass) ++failures;
  };
  const auto guarded = [&](int n, const char* name, auto&& fn) {
    if (!wanted(n)) return;
    try {
      report(n, name, fn());
    } catch (const std::exception& e) {
      report(n, name, Outcome{false, std::string("exception: ") + e.what()});
    }
  };

  const GeneratorConfig gen = corpus_config(seed);
  const std::vector<CorpusItem> corpus = generate_corpus(gen);
  const EmotionOracle oracle = EmotionOracle::fit(GeneratorConfig{.seed = seed, .n_mels = gen.n_mels});

  guarded(1, "autodiff", [&] { return autodiff(seed); });
  guarded(2, "style loss", [&] { return style_invariants(seed); });
  guarded(3, "additivity", [&] { return additivity(seed, corpus); });

  guarded(4, "training sanity", [&] { return training_sanity(corpus, seed, dir / "sanity"); });

  if (wanted(5) || wanted(6) || wanted(7)) {
    try {
      const std::vector<CorpusItem> transfer_corpus = generate_corpus(corpus_config(seed, kTransferPerEmotion));
      TrainedRun full = train_and_evaluate(transfer_corpus, train_config(seed, steps), oracle, dir / "full");
      if (wanted(5)) {
        TrainConfig tac_only = train_config(seed, steps);
        tac_only.weights = ablation_weights(0);
        const TrainedRun tac = train_and_evaluate(transfer_corpus, tac_only, oracle, dir / "tac_only");
        report(5, "emotion transfer",
               {full.macro >= 0.85 && full.macro >= tac.macro,
                fmt("%lld training items, %lld steps: macro accuracy full %.3f, L_tac only %.3f",
                    static_cast<long long>(select_split(transfer_corpus, "train").size()),
                    static_cast<long long>(steps), full.macro, tac.macro)});
      }
      EmotionalTts model = model_from_checkpoint(full.checkpoint);
      const std::vector<const CorpusItem*> test = select_split(transfer_corpus, "test");
      const double sweep[] = {0.1, 0.5, 1.0, 1.5, 2.5};
      EvalOptions options;
      options.seed = seed;
      const std::vector<SweepSample> samples = run_sweeps(model, test, sweep, options);
      std::vector<SweepSample> levels;
      for (const SweepSample& s : samples) {
        if (s.alpha == 0.5 || s.alpha == 1.5 || s.alpha == 2.5) levels.push_back(s);
      }
      guarded(6, "strength control", [&] {
        const Outcome homogeneity = norm_homogeneity(model, transfer_corpus);
        const double three[] = {0.5, 1.5, 2.5};
        const StrengthOrdering ordering = strength_ordering(levels, three, oracle);
        const NeutralShift shift = neutral_shift(samples, 0.1, 1.0, oracle);
        std::ostringstream means;
        means << ordering.mean_strength.format(Eigen::IOFormat(3, 0, " ", "; "));
        return Outcome{homogeneity.pass && ordering.emotions_ordered() >= 5 && shift.emotions_closer() >= 4,
                       "norm " + homogeneity.detail +
                           fmt(", ordered emotions %lld/6 (pairwise %.3f), alpha 0.1 nearer neutral %lld/6",
                               static_cast<long long>(ordering.emotions_ordered()), ordering.pairwise_accuracy,
                               static_cast<long long>(shift.emotions_closer())) +
                           ", mean strength [" + means.str() + "]"};
      });
      guarded(7, "cluster separation", [&] {
        const ClusterReport clusters = strength_clusters(levels);
        std::ostringstream s;
        s << clusters.silhouettes.transpose().format(Eigen::IOFormat(3, 0, " "));
        return Outcome{clusters.silhouettes.minCoeff() > 0.0, "per-emotion silhouettes [" + s.str() + "]"};
      });
    } catch (const std::exception& e) {
      for (int n = 5; n <= 7; ++n) {
        if (wanted(n)) report(n, "transfer run", Outcome{false, std::string("exception: ") + e.what()});
      }
    }
  }

  guarded(8, "infrastructure", [&] { return infrastructure(seed, dir); });
  guarded(9, "audio frontend", [&] { return audio_frontend(seed); });

  std::cout << (failures == 0 ? "ALL PASS" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
