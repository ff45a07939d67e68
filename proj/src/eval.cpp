#include "emos/eval.hpp"

#include "emos/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace emos {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> axis_labels)
    : labels(std::move(axis_labels)),
      counts(RowMatrix::Zero(static_cast<Index>(labels.size()), static_cast<Index>(labels.size()))) {}

void ConfusionMatrix::add(int truth, int predicted) {
  const auto k = static_cast<int>(labels.size());
  if (truth < 0 || truth >= k || predicted < 0 || predicted >= k) {
    throw ArgumentError("ConfusionMatrix::add: class out of range");
  }
  counts(truth, predicted) += 1.0;
}

RowMatrix ConfusionMatrix::normalized() const {
  RowMatrix out = counts;
  for (Index i = 0; i < out.rows(); ++i) {
    const double s = out.row(i).sum();
    if (s > 0.0) out.row(i) /= s;
  }
  return out;
}

Vector ConfusionMatrix::per_class_accuracy() const { return normalized().diagonal(); }

double ConfusionMatrix::macro_accuracy() const {
  const Vector acc = per_class_accuracy();
  double total = 0.0;
  Index rows = 0;
  for (Index i = 0; i < counts.rows(); ++i) {
    if (counts.row(i).sum() > 0.0) {
      total += acc[i];
      ++rows;
    }
  }
  return rows > 0 ? total / static_cast<double>(rows) : 0.0;
}

std::string ConfusionMatrix::to_csv(bool normalize) const {
  const RowMatrix m = normalize ? normalized() : counts;
  std::ostringstream out;
  out.precision(6);
  out << "true\\predicted";
  for (const auto& l : labels) out << ',' << l;
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) out << ',' << m(i, j);
    out << '\n';
  }
  return out.str();
}

ConfusionMatrix emotion_confusion_matrix() {
  return ConfusionMatrix(std::vector<std::string>(kEmotionNames.begin(), kEmotionNames.end()));
}

std::array<const CorpusItem*, kNumEmotions> select_references(std::span<const CorpusItem* const> items,
                                                              std::uint64_t seed) {
  std::array<const CorpusItem*, kNumEmotions> refs{};
  Rng rng(derive_seed(seed, 0x5EF));
  for (int label = 0; label < kNumEmotions; ++label) {
    std::vector<const CorpusItem*> pool;
    for (const CorpusItem* item : items) {
      if (item->label == label) pool.push_back(item);
    }
    if (!pool.empty()) refs[static_cast<std::size_t>(label)] = pool[rng.below(pool.size())];
  }
  return refs;
}

ConfusionMatrix oracle_confusion(std::span<const CorpusItem* const> items, const EmotionOracle& oracle) {
  ConfusionMatrix m = emotion_confusion_matrix();
  for (const CorpusItem* item : items) m.add(item->label, oracle.classify(item->mel, item->chars));
  return m;
}

ConfusionMatrix emotion_confusion(EmotionalTts& model, std::span<const CorpusItem* const> test,
                                  const EmotionOracle& oracle, const EvalOptions& options) {
  if (test.empty()) throw ArgumentError("emotion_confusion: empty test set");
  const auto refs = select_references(test, options.seed);
  std::array<EmotionEncodingOutput, kNumEmotions> encoded;
  for (int label = 0; label < kNumEmotions; ++label) {
    if (refs[static_cast<std::size_t>(label)] != nullptr) {
      encoded[static_cast<std::size_t>(label)] = model.embedding_net.encode(refs[static_cast<std::size_t>(label)]->mel);
    }
  }
  ConfusionMatrix m = emotion_confusion_matrix();
  for (const CorpusItem* item : test) {
    const Tensor e = scale_embedding(encoded[static_cast<std::size_t>(item->label)].embedding, options.alpha);
    const SynthesisResult out = model.synthesizer.synthesize(item->chars, e, options.max_frames);
    m.add(item->label, oracle.classify(out.mel, item->chars));
  }
  return m;
}

std::vector<SweepSample> run_sweeps(EmotionalTts& model, std::span<const CorpusItem* const> test,
                                    std::span<const double> alphas, const EvalOptions& options) {
  const auto refs = select_references(test, options.seed);
  std::vector<SweepSample> samples;
  for (int label = 1; label < kNumEmotions; ++label) {
    const CorpusItem* ref = refs[static_cast<std::size_t>(label)];
    if (ref == nullptr) throw ArgumentError("run_sweeps: no test item for emotion " +
                                            std::string(kEmotionNames[static_cast<std::size_t>(label)]));
    for (const CorpusItem* item : test) {
      if (item->label != label) continue;
      StrengthRequest request{ref->mel, item->chars, 1.0, options.max_frames};
      for (const SweepRow& row : strength_sweep(model, request, alphas)) {
        SweepSample s;
        s.label = label;
        s.alpha = row.alpha;
        s.text_id = item->id;
        s.chars = item->chars;
        s.mel = row.result.synthesis.mel;
        if (s.mel.rows() >= kTimeReduction) {
          s.embedding = model.auxiliary_net.encode(s.mel).embedding.flat();
        } else {
          RowMatrix padded = RowMatrix::Constant(kTimeReduction, s.mel.cols(), log_floor());
          padded.topRows(s.mel.rows()) = s.mel;
          s.embedding = model.auxiliary_net.encode(padded).embedding.flat();
        }
        samples.push_back(std::move(s));
      }
    }
  }
  return samples;
}

std::vector<Index> ranks(std::span<const double> values) {
  std::vector<Index> order(values.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
  });
  std::vector<Index> rank(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[static_cast<std::size_t>(order[r])] = static_cast<Index>(r);
  return rank;
}

Index StrengthOrdering::emotions_ordered() const {
  return static_cast<Index>(std::count(ordered.begin(), ordered.end(), true));
}

namespace {

Index alpha_index(std::span<const double> alphas, double alpha) {
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i] == alpha) return static_cast<Index>(i);
  }
  return -1;
}

}  // namespace

StrengthOrdering strength_ordering(std::span<const SweepSample> samples, std::span<const double> alphas,
                                   const EmotionOracle& oracle) {
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    if (!(alphas[i] > alphas[i - 1])) throw ArgumentError("strength_ordering: alphas must be strictly increasing");
  }
  const auto k = static_cast<Index>(alphas.size());
  StrengthOrdering out;
  out.alphas.assign(alphas.begin(), alphas.end());
  out.matrices.assign(kNumEmotions - 1, RowMatrix::Zero(k, k));
  out.mean_strength = RowMatrix::Zero(kNumEmotions - 1, k);
  RowMatrix counts = RowMatrix::Zero(kNumEmotions - 1, k);
  double pairs = 0.0, correct = 0.0;

  for (int label = 1; label < kNumEmotions; ++label) {
    std::vector<std::string> texts;
    for (const SweepSample& s : samples) {
      if (s.label == label && std::find(texts.begin(), texts.end(), s.text_id) == texts.end()) {
        texts.push_back(s.text_id);
      }
    }
    for (const std::string& text : texts) {
      std::vector<double> predicted(static_cast<std::size_t>(k), 0.0);
      std::vector<bool> seen(static_cast<std::size_t>(k), false);
      for (const SweepSample& s : samples) {
        if (s.label != label || s.text_id != text) continue;
        const Index a = alpha_index(alphas, s.alpha);
        if (a < 0 || seen[static_cast<std::size_t>(a)]) continue;
        seen[static_cast<std::size_t>(a)] = true;
        predicted[static_cast<std::size_t>(a)] = oracle.strength(s.mel, s.chars, label);
        out.mean_strength(label - 1, a) += predicted[static_cast<std::size_t>(a)];
        counts(label - 1, a) += 1.0;
      }
      if (std::count(seen.begin(), seen.end(), true) != k) continue;
      const std::vector<Index> r = ranks(predicted);
      for (Index a = 0; a < k; ++a) out.matrices[static_cast<std::size_t>(label - 1)](a, r[static_cast<std::size_t>(a)]) += 1.0;
      for (Index a = 0; a < k; ++a) {
        for (Index b = a + 1; b < k; ++b) {
          pairs += 1.0;
          if (predicted[static_cast<std::size_t>(b)] > predicted[static_cast<std::size_t>(a)]) correct += 1.0;
        }
      }
    }
  }
  out.mean_strength = (out.mean_strength.array() / counts.array().max(1.0)).matrix();
  for (Index e = 0; e < kNumEmotions - 1; ++e) {
    bool increasing = counts.row(e).minCoeff() > 0.0;
    for (Index a = 1; a < k && increasing; ++a) increasing = out.mean_strength(e, a) > out.mean_strength(e, a - 1);
    out.ordered.push_back(increasing);
  }
  out.pairwise_accuracy = pairs > 0.0 ? correct / pairs : 0.0;
  return out;
}

Index NeutralShift::emotions_closer() const {
  Index n = 0;
  for (Index e = 0; e < low.size(); ++e) n += low[e] < unit[e] ? 1 : 0;
  return n;
}

NeutralShift neutral_shift(std::span<const SweepSample> samples, double low_alpha, double unit_alpha,
                           const EmotionOracle& oracle) {
  NeutralShift out;
  out.low = Vector::Zero(kNumEmotions - 1);
  out.unit = Vector::Zero(kNumEmotions - 1);
  Vector nl = Vector::Zero(kNumEmotions - 1), nu = Vector::Zero(kNumEmotions - 1);
  for (const SweepSample& s : samples) {
    if (s.label < 1) continue;
    if (s.alpha == low_alpha) {
      out.low[s.label - 1] += oracle.neutral_distance(s.mel, s.chars);
      nl[s.label - 1] += 1.0;
    } else if (s.alpha == unit_alpha) {
      out.unit[s.label - 1] += oracle.neutral_distance(s.mel, s.chars);
      nu[s.label - 1] += 1.0;
    }
  }
  for (Index e = 0; e < kNumEmotions - 1; ++e) {
    if (nl[e] == 0.0 || nu[e] == 0.0) {
      throw ArgumentError("neutral_shift: missing samples for emotion " +
                          std::string(kEmotionNames[static_cast<std::size_t>(e + 1)]));
    }
  }
  out.low.array() /= nl.array();
  out.unit.array() /= nu.array();
  return out;
}

ProjectionPlotData project_embeddings(const RowMatrix& samples) {
  if (samples.rows() < 3 || samples.cols() < 2) {
    throw ArgumentError("project_embeddings: need at least 3 samples of dimension >= 2, got " +
                        std::to_string(samples.rows()) + "x" + std::to_string(samples.cols()));
  }
  const RowMatrix centered = samples.rowwise() - samples.colwise().mean();
  ProjectionPlotData out;
  out.coordinates = RowMatrix::Zero(samples.rows(), 2);
  out.components = RowMatrix::Zero(samples.cols(), 2);
  const double total = centered.squaredNorm();
  if (total == 0.0) {
    out.components(0, 0) = 1.0;
    out.components(1, 1) = 1.0;
    return out;
  }
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  for (Index c = 0; c < 2; ++c) {
    Vector component = v.col(c);
    Index largest = 0;
    component.cwiseAbs().maxCoeff(&largest);
    if (component[largest] < 0.0) component = -component;
    out.components.col(c) = component;
    const double s = c < svd.singularValues().size() ? svd.singularValues()[c] : 0.0;
    out.explained_variance[c] = s * s / total;
  }
  out.coordinates = centered * out.components;
  return out;
}

double silhouette(const RowMatrix& points, std::span<const int> groups) {
  const Index n = points.rows();
  if (static_cast<Index>(groups.size()) != n) throw DimensionError("silhouette: one group per point required");
  if (n == 0) throw ArgumentError("silhouette: no points");
  const int k = *std::max_element(groups.begin(), groups.end()) + 1;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<Index> count(static_cast<std::size_t>(k), 0);
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto g = static_cast<std::size_t>(groups[static_cast<std::size_t>(j)]);
      sum[g] += (points.row(i) - points.row(j)).norm();
      ++count[g];
    }
    const auto own = static_cast<std::size_t>(groups[static_cast<std::size_t>(i)]);
    if (count[own] == 0) continue;
    const double a = sum[own] / static_cast<double>(count[own]);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < sum.size(); ++g) {
      if (g != own && count[g] > 0) b = std::min(b, sum[g] / static_cast<double>(count[g]));
    }
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

ClusterReport strength_clusters(std::span<const SweepSample> samples) {
  ClusterReport out;
  out.silhouettes = Vector::Zero(kNumEmotions - 1);
  for (int label = 1; label < kNumEmotions; ++label) {
    std::vector<const SweepSample*> members;
    std::vector<double> alphas;
    for (const SweepSample& s : samples) {
      if (s.label != label) continue;
      members.push_back(&s);
      if (std::find(alphas.begin(), alphas.end(), s.alpha) == alphas.end()) alphas.push_back(s.alpha);
    }
    if (members.size() < 3) throw ArgumentError("strength_clusters: fewer than 3 samples for an emotion");
    RowMatrix x(static_cast<Index>(members.size()), members.front()->embedding.size());
    std::vector<int> groups;
    for (std::size_t i = 0; i < members.size(); ++i) {
      x.row(static_cast<Index>(i)) = members[i]->embedding.transpose();
      groups.push_back(static_cast<int>(std::find(alphas.begin(), alphas.end(), members[i]->alpha) - alphas.begin()));
    }
    ProjectionPlotData p = project_embeddings(x);
    out.silhouettes[label - 1] = silhouette(p.coordinates, groups);
    out.projections.push_back(std::move(p));
    out.members.push_back(std::move(members));
  }
  return out;
}

LossWeights ablation_weights(Index column) {
  LossWeights w;
  switch (column) {
    case 0: w.use_sty = w.use_cls_src = w.use_cls_tgt = false; break;
    case 1: w.use_sty = w.use_cls_src = false; break;
    case 2: w.use_sty = w.use_cls_tgt = false; break;
    case 3: w.use_sty = false; break;
    case 4: break;
    default: throw ArgumentError("ablation_weights: column " + std::to_string(column) + " out of range");
  }
  return w;
}

Vector AblationTable::macro() const { return accuracy.colwise().mean().transpose(); }

std::string AblationTable::to_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << "emotion";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (Index e = 0; e < accuracy.rows(); ++e) {
    out << kEmotionNames[static_cast<std::size_t>(e)];
    for (Index c = 0; c < accuracy.cols(); ++c) out << ',' << accuracy(e, c);
    out << '\n';
  }
  const Vector m = macro();
  out << "macro";
  for (Index c = 0; c < m.size(); ++c) out << ',' << m[c];
  out << '\n';
  return out.str();
}

AblationTable ablation_grid(const std::vector<CorpusItem>& corpus, const TrainConfig& base,
                            const EmotionOracle& oracle, const EvalOptions& options) {
  const std::vector<const CorpusItem*> test = select_split(corpus, "test");
  if (test.empty()) throw ArgumentError("ablation_grid: corpus has no test split");
  AblationTable table;
  table.columns.assign(kAblationColumns.begin(), kAblationColumns.end());
  table.accuracy = RowMatrix::Zero(kNumEmotions, static_cast<Index>(kAblationColumns.size()));
  for (Index c = 0; c < static_cast<Index>(kAblationColumns.size()); ++c) {
    TrainConfig config = base;
    config.weights = ablation_weights(c);
    Trainer trainer(corpus, config);
    std::size_t losses = 0;
    trainer.run([&losses](const StepMetrics& m) { losses += m.classification_losses; });
    table.classification_losses.push_back(losses);
    table.accuracy.col(c) = emotion_confusion(trainer.model(), test, oracle, options).per_class_accuracy();
  }
  return table;
}

}  // namespace emos
