#include "emos/audio.hpp"
#include "emos/errors.hpp"
#include "emos/eval.hpp"
#include "emos/gradcheck_suite.hpp"
#include "emos/inference.hpp"
#include "emos/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace emos;

namespace {

/// EMOS_SEED, when set, replaces any seed given on the command line.
void apply_seed_override(std::uint64_t& seed) {
  const char* env = std::getenv("EMOS_SEED");
  if (env == nullptr || *env == '\0') return;
  try {
    std::size_t used = 0;
    const unsigned long long value = std::stoull(env, &used, 0);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
    seed = value;
  } catch (const std::exception&) {
    throw ArgumentError(std::string("EMOS_SEED is not an unsigned integer: ") + env);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_mel(const fs::path& path, const RowMatrix& mel) {
  const std::vector<std::uint8_t> bytes = encode_mel(mel);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string alpha_tag(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", alpha);
  return buf;
}

std::vector<const CorpusItem*> test_split(const std::vector<CorpusItem>& corpus) {
  std::vector<const CorpusItem*> test = select_split(corpus, "test");
  if (test.empty()) throw ArgumentError("corpus has no test split; generate it with --test-per-emotion N");
  return test;
}

EmotionOracle fit_oracle(const std::vector<CorpusItem>& corpus) {
  GeneratorConfig config;
  config.n_mels = corpus.front().mel.cols();
  return EmotionOracle::fit(config);
}

struct GenArgs {
  std::string out;
  GeneratorConfig config;
};

int gen_corpus(GenArgs& a) {
  apply_seed_override(a.config.seed);
  const std::vector<CorpusItem> items = generate_corpus(a.config);
  write_corpus(a.out, items);
  std::cout << "wrote " << items.size() << " items to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, out, resume;
  TrainConfig config;
  Index steps = -1;
  bool no_sty = false, no_cls_src = false, no_cls_tgt = false;
};

int train(TrainArgs& a) {
  std::vector<CorpusItem> corpus = load_corpus(a.corpus);
  fs::create_directories(a.out);
  const fs::path metrics_path = fs::path(a.out) / "metrics.jsonl";
  std::unique_ptr<Trainer> trainer;
  if (!a.resume.empty()) {
    trainer = std::make_unique<Trainer>(std::move(corpus), load_checkpoint(a.resume));
  } else {
    apply_seed_override(a.config.seed);
    a.config.weights.use_sty = !a.no_sty;
    a.config.weights.use_cls_src = !a.no_cls_src;
    a.config.weights.use_cls_tgt = !a.no_cls_tgt;
    a.config.model.n_mels = corpus.empty() ? a.config.model.n_mels : corpus.front().mel.cols();
    trainer = std::make_unique<Trainer>(std::move(corpus), a.config);
  }
  if (a.steps >= 0) trainer->config().steps = a.steps;
  std::ofstream metrics(metrics_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw IoError("cannot write " + metrics_path.string());
  trainer->run(
      [&](const StepMetrics& m) {
        metrics << to_json_line(m) << '\n';
        if (m.step % 50 == 0) std::cout << "step " << m.step << " l_total " << m.loss.l_total << std::endl;
      },
      a.out);
  const fs::path final_path = fs::path(a.out) / "final.ckpt";
  save_checkpoint(trainer->checkpoint(), final_path);
  std::cout << "saved " << final_path.string() << "\n";
  return 0;
}

int gradcheck(std::uint64_t seed, Index points) {
  apply_seed_override(seed);
  bool ok = true;
  for (const GradCheckCase& c : run_gradcheck_suite(seed, points)) {
    const bool pass = c.max_error < 1e-4;
    ok = ok && pass;
    std::printf("%-26s %d points  max rel err %.3e  %s\n", c.name.c_str(), static_cast<int>(c.points), c.max_error,
                pass ? "ok" : "FAIL");
  }
  return ok ? 0 : 1;
}

struct SynthArgs {
  std::string checkpoint, ref, corpus, text, out;
  double alpha = 1.0;
  std::vector<double> sweep;
  Index max_frames = 1000;
};

RowMatrix load_reference(const SynthArgs& a, Index n_mels) {
  if (fs::path(a.ref).extension() == ".wav") {
    const WavData wav = read_wav(a.ref);
    MelConfig mc;
    mc.sample_rate = wav.sample_rate;
    mc.n_mels = n_mels;
    return mel_spectrogram(wav.samples, mc).frames;
  }
  if (a.corpus.empty()) throw ArgumentError("--ref " + a.ref + " is not a .wav file; pass --corpus to look it up as an id");
  for (const CorpusItem& item : load_corpus(a.corpus)) {
    if (item.id == a.ref) return item.mel;
  }
  throw ArgumentError("no corpus item with id " + a.ref);
}

int synthesize(const SynthArgs& a) {
  EmotionalTts model = model_from_checkpoint(load_checkpoint(a.checkpoint));
  StrengthRequest request{load_reference(a, model.n_mels()), encode_text(a.text), a.alpha, a.max_frames};
  const std::vector<double> alphas = a.sweep.empty() ? std::vector<double>{a.alpha} : a.sweep;
  fs::create_directories(a.out);
  const std::vector<SweepRow> rows = strength_sweep(model, request, alphas);

  std::ostringstream features, warnings;
  features << "alpha,frames,pitch_mean,pitch_range,energy,truncated,embedding_norm\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const SweepRow& r = rows[i];
    const std::string name = "mel_" + std::to_string(i) + "_alpha" + alpha_tag(r.alpha) + ".f32";
    write_mel(fs::path(a.out) / name, r.result.synthesis.mel);
    features << r.alpha << ',' << r.features.frames << ',' << r.features.pitch_mean << ',' << r.features.pitch_range
             << ',' << r.features.energy << ',' << (r.result.synthesis.truncated ? 1 : 0) << ','
             << r.result.scaled_embedding.flat().norm() << '\n';
    for (const WarningRecord& w : r.result.warnings) {
      warnings << nlohmann::json{{"code", w.code}, {"message", w.message}, {"alpha", w.alpha}}.dump() << '\n';
      std::cerr << "warning: " << w.message << "\n";
    }
  }
  write_text(fs::path(a.out) / "features.csv", features.str());
  write_text(fs::path(a.out) / "warnings.jsonl", warnings.str());
  std::cout << "wrote " << rows.size() << " syntheses to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string mode, checkpoint, corpus, out;
  EvalOptions options;
  Index steps = -1;
};

int evaluate(EvalArgs& a) {
  apply_seed_override(a.options.seed);
  const Checkpoint checkpoint = load_checkpoint(a.checkpoint);
  const std::vector<CorpusItem> corpus = load_corpus(a.corpus);
  const std::vector<const CorpusItem*> test = test_split(corpus);
  const EmotionOracle oracle = fit_oracle(corpus);
  EmotionalTts model = model_from_checkpoint(checkpoint);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  nlohmann::json summary{{"mode", a.mode}, {"seed", a.options.seed}};

  if (a.mode == "confusion") {
    const ConfusionMatrix m = emotion_confusion(model, test, oracle, a.options);
    write_text(out / "confusion.csv", m.to_csv());
    write_text(out / "confusion_counts.csv", m.to_csv(false));
    summary["macro_accuracy"] = m.macro_accuracy();
    summary["oracle_ground_truth_accuracy"] = oracle_confusion(test, oracle).macro_accuracy();
    const Vector acc = m.per_class_accuracy();
    for (Index e = 0; e < acc.size(); ++e) summary["accuracy"][std::string(kEmotionNames[static_cast<std::size_t>(e)])] = acc[e];
  } else if (a.mode == "ordering") {
    const std::vector<double> alphas{0.1, 0.5, 1.0, 1.5, 2.5};
    const std::vector<double> levels{0.5, 1.5, 2.5};
    const std::vector<SweepSample> samples = run_sweeps(model, test, alphas, a.options);
    const StrengthOrdering ord = strength_ordering(samples, levels, oracle);
    const NeutralShift shift = neutral_shift(samples, 0.1, 1.0, oracle);
    std::ostringstream csv, pitch;
    csv << "emotion,true_rank,pred_rank_0,pred_rank_1,pred_rank_2\n";
    pitch << "emotion,alpha,text_id,frame,pitch_proxy\n";
    for (int e = 1; e < kNumEmotions; ++e) {
      const RowMatrix& m = ord.matrices[static_cast<std::size_t>(e - 1)];
      for (Index r = 0; r < m.rows(); ++r) {
        csv << kEmotionNames[static_cast<std::size_t>(e)] << ',' << r;
        for (Index c = 0; c < m.cols(); ++c) csv << ',' << m(r, c);
        csv << '\n';
      }
      const std::string name(kEmotionNames[static_cast<std::size_t>(e)]);
      summary["emotions"][name] = {{"ordered", static_cast<bool>(ord.ordered[static_cast<std::size_t>(e - 1)])},
                                   {"mean_strength", std::vector<double>(ord.mean_strength.row(e - 1).begin(),
                                                                         ord.mean_strength.row(e - 1).end())},
                                   {"neutral_distance_alpha_0.1", shift.low[e - 1]},
                                   {"neutral_distance_alpha_1", shift.unit[e - 1]}};
    }
    for (const SweepSample& s : samples) {
      const Vector p = pitch_proxy(s.mel);
      for (Index t = 0; t < p.size(); ++t) {
        pitch << kEmotionNames[static_cast<std::size_t>(s.label)] << ',' << s.alpha << ',' << s.text_id << ',' << t
              << ',' << p[t] << '\n';
      }
    }
    write_text(out / "ordering.csv", csv.str());
    write_text(out / "pitch_contours.csv", pitch.str());
    summary["emotions_ordered"] = ord.emotions_ordered();
    summary["pairwise_accuracy"] = ord.pairwise_accuracy;
    summary["emotions_closer_to_neutral_at_0.1"] = shift.emotions_closer();
  } else if (a.mode == "project") {
    const std::vector<double> levels{0.5, 1.5, 2.5};
    const std::vector<SweepSample> samples = run_sweeps(model, test, levels, a.options);
    const ClusterReport report = strength_clusters(samples);
    std::ostringstream csv;
    csv << "emotion,alpha,text_id,pc1,pc2\n";
    for (std::size_t e = 0; e < report.members.size(); ++e) {
      const auto& members = report.members[e];
      const ProjectionPlotData& p = report.projections[e];
      for (std::size_t i = 0; i < members.size(); ++i) {
        csv << kEmotionNames[e + 1] << ',' << members[i]->alpha << ',' << members[i]->text_id << ','
            << p.coordinates(static_cast<Index>(i), 0) << ',' << p.coordinates(static_cast<Index>(i), 1) << '\n';
      }
      summary["emotions"][std::string(kEmotionNames[e + 1])] = {
          {"silhouette", report.silhouettes[static_cast<Index>(e)]},
          {"explained_variance", {p.explained_variance[0], p.explained_variance[1]}}};
    }
    write_text(out / "projection.csv", csv.str());
  } else if (a.mode == "ablation") {
    TrainConfig base = train_config_from_json(checkpoint.config);
    apply_seed_override(base.seed);
    if (a.steps >= 0) base.steps = a.steps;
    const AblationTable table = ablation_grid(corpus, base, oracle, a.options);
    write_text(out / "ablation.csv", table.to_csv());
    const Vector macro = table.macro();
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      summary["columns"][table.columns[c]] = {{"macro_accuracy", macro[static_cast<Index>(c)]},
                                              {"classification_losses", table.classification_losses[c]}};
    }
  } else {
    throw ArgumentError("unknown eval mode " + a.mode);
  }
  write_text(out / "summary.jsonl", summary.dump() + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotional TTS with strength control"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic emotional corpus");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.config.seed, "Generator seed");
  gen_cmd->add_option("--per-emotion", gen.config.n_per_emotion, "Training items per emotion (>= 10)");
  gen_cmd->add_option("--neutral-ratio", gen.config.neutral_ratio, "Neutral items per emotion item");
  gen_cmd->add_option("--test-per-emotion", gen.config.test_per_emotion, "Held-out items per emotion");
  gen_cmd->add_option("--n-mels", gen.config.n_mels, "Mel bands");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train on a corpus directory");
  train_cmd->add_option("--corpus", tr.corpus, "Corpus directory")->required();
  train_cmd->add_option("--out", tr.out, "Output directory for metrics and checkpoints")->required();
  train_cmd->add_option("--steps", tr.steps, "Total optimizer steps");
  train_cmd->add_option("--seed", tr.config.seed, "Initialization and sampling seed");
  train_cmd->add_option("--batch-size", tr.config.batch_size, "Utterances per step");
  train_cmd->add_option("--lr", tr.config.learning_rate, "Learning rate");
  train_cmd->add_option("--clip", tr.config.clip_norm, "Global gradient-norm clip");
  train_cmd->add_option("--checkpoint-interval", tr.config.checkpoint_interval, "Save every N steps (0: final only)");
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint");
  train_cmd->add_flag("--no-sty", tr.no_sty, "Drop the style loss");
  train_cmd->add_flag("--no-cls-src", tr.no_cls_src, "Drop the embedding-network classification loss");
  train_cmd->add_flag("--no-cls-tgt", tr.no_cls_tgt, "Drop the auxiliary classification loss");

  std::uint64_t gc_seed = 1;
  Index gc_points = 10;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op and the full loss");
  gc_cmd->add_option("--seed", gc_seed, "Seed for the sampled points");
  gc_cmd->add_option("--points", gc_points, "Points per op");

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synthesize", "Transfer a reference's emotion to new text");
  synth_cmd->add_option("--checkpoint", sy.checkpoint, "Checkpoint file")->required();
  synth_cmd->add_option("--ref", sy.ref, "Corpus item id or 16 kHz mono WAV file")->required();
  synth_cmd->add_option("--corpus", sy.corpus, "Corpus directory for id references");
  synth_cmd->add_option("--text", sy.text, "Text to speak")->required();
  synth_cmd->add_option("--alpha", sy.alpha, "Emotion strength scalar");
  synth_cmd->add_option("--sweep", sy.sweep, "Comma-separated strength scalars")->delimiter(',');
  synth_cmd->add_option("--max-frames", sy.max_frames, "Decoder frame cap");
  synth_cmd->add_option("--out", sy.out, "Output directory")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("mode", ev.mode, "confusion | ordering | project | ablation")
      ->required()
      ->check(CLI::IsMember({"confusion", "ordering", "project", "ablation"}));
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--corpus", ev.corpus, "Corpus directory with a test split")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_option("--seed", ev.options.seed, "Reference-selection seed");
  eval_cmd->add_option("--max-frames", ev.options.max_frames, "Decoder frame cap");
  eval_cmd->add_option("--steps", ev.steps, "Training steps per ablation cell");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen_cmd) return gen_corpus(gen);
    if (*train_cmd) return train(tr);
    if (*gc_cmd) return gradcheck(gc_seed, gc_points);
    if (*synth_cmd) return synthesize(sy);
    if (*eval_cmd) return evaluate(ev);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
