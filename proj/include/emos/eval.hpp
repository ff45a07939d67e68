#pragma once

#include "emos/inference.hpp"
#include "emos/oracle.hpp"
#include "emos/training.hpp"

#include <array>
#include <string>
#include <vector>

namespace emos {

/// k x k counts; rows are true classes, columns predictions.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  RowMatrix counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> axis_labels);

  void add(int truth, int predicted);
  double total() const { return counts.sum(); }
  /// Row-normalized copy; empty rows stay zero.
  RowMatrix normalized() const;
  /// Diagonal of `normalized()`.
  Vector per_class_accuracy() const;
  /// Mean of per-class accuracy over non-empty rows.
  double macro_accuracy() const;
  std::string to_csv(bool normalize = true) const;
};

ConfusionMatrix emotion_confusion_matrix();

struct EvalOptions {
  std::uint64_t seed = 1;
  Index max_frames = 256;
  double alpha = 1.0;
};

/// One reference per emotion drawn from `items` (seeded); nullptr where an
/// emotion has no item.
std::array<const CorpusItem*, kNumEmotions> select_references(std::span<const CorpusItem* const> items,
                                                              std::uint64_t seed);

/// The oracle applied to the items' own mels.
ConfusionMatrix oracle_confusion(std::span<const CorpusItem* const> items, const EmotionOracle& oracle);

/// Synthesizes each test item's text with its emotion's reference and
/// classifies the output. Throws ArgumentError on an empty test set.
ConfusionMatrix emotion_confusion(EmotionalTts& model, std::span<const CorpusItem* const> test,
                                  const EmotionOracle& oracle, const EvalOptions& options = {});

/// A synthesized mel from a strength sweep plus the auxiliary network's
/// embedding of it.
struct SweepSample {
  int label = 0;
  double alpha = 0.0;
  std::string text_id;
  std::vector<int> chars;
  RowMatrix mel;
  Vector embedding;
};

/// For every non-neutral emotion: the emotion's reference, each test text of
/// that emotion, each alpha.
std::vector<SweepSample> run_sweeps(EmotionalTts& model, std::span<const CorpusItem* const> test,
                                    std::span<const double> alphas, const EvalOptions& options = {});

/// Rank of each value in ascending order; ties keep input order.
std::vector<Index> ranks(std::span<const double> values);

struct StrengthOrdering {
  std::vector<double> alphas;
  /// Per emotion label 1..6 (index label - 1): rows = true alpha rank,
  /// columns = rank of the regressor output.
  std::vector<RowMatrix> matrices;
  /// Mean regressor output per emotion and alpha.
  RowMatrix mean_strength;
  /// Whether the mean outputs are strictly increasing in alpha.
  std::vector<bool> ordered;
  /// Fraction of alpha pairs, within a text, whose outputs are in order.
  double pairwise_accuracy = 0.0;

  Index emotions_ordered() const;
};

/// Alphas must be strictly increasing.
StrengthOrdering strength_ordering(std::span<const SweepSample> samples, std::span<const double> alphas,
                                   const EmotionOracle& oracle);

struct NeutralShift {
  /// Per emotion label 1..6: mean oracle distance to the neutral centroid at
  /// the low and the unit alpha.
  Vector low, unit;
  Index emotions_closer() const;
};

NeutralShift neutral_shift(std::span<const SweepSample> samples, double low_alpha, double unit_alpha,
                           const EmotionOracle& oracle);

struct ProjectionPlotData {
  RowMatrix coordinates;  // n x 2
  RowMatrix components;   // d x 2, orthonormal columns
  Eigen::Vector2d explained_variance = Eigen::Vector2d::Zero();  // ratios
};

/// Top-2 principal components of the rows of `samples`. Each component's
/// largest-magnitude loading is positive. Identical rows give all-zero
/// coordinates and zero explained variance.
ProjectionPlotData project_embeddings(const RowMatrix& samples);

/// Mean silhouette coefficient under Euclidean distance. Members of
/// singleton groups score 0.
double silhouette(const RowMatrix& points, std::span<const int> groups);

struct ClusterReport {
  /// Per emotion label 1..6, silhouette of the alpha groups after a
  /// per-emotion projection.
  Vector silhouettes;
  std::vector<ProjectionPlotData> projections;
  std::vector<std::vector<const SweepSample*>> members;
};

ClusterReport strength_clusters(std::span<const SweepSample> samples);

inline constexpr std::array<const char*, 5> kAblationColumns = {"L_tac", "+L_cls_tgt", "+L_cls_src",
                                                                "+L_cls_src +L_cls_tgt", "L_total"};

/// Loss switches for one ablation column.
LossWeights ablation_weights(Index column);

struct AblationTable {
  std::vector<std::string> columns;
  RowMatrix accuracy;  // kNumEmotions x columns
  std::vector<std::size_t> classification_losses;  // total over each cell's run

  Vector macro() const;
  std::string to_csv() const;
};

/// One training run per column from the same seed, evaluated with
/// `emotion_confusion` on the corpus test split.
AblationTable ablation_grid(const std::vector<CorpusItem>& corpus, const TrainConfig& base,
                            const EmotionOracle& oracle, const EvalOptions& options = {});

}  // namespace emos
