#pragma once

#include "magnet/common.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace magnet {

/// Reference points (cluster centers for kNC, examples for soft kNN) with
/// their classes, the kernel variance and the neighbourhood size.
struct EvalContext {
  Eigen::MatrixXd points;  // dim x P
  std::vector<int> classes;
  int class_count = 0;
  double variance = 1.0;  // σ² in exp(-d² / (2σ²))
  int neighbours = 128;   // L

  void validate() const;
};

struct Classification {
  int label = 0;
  Eigen::VectorXd scores;  // per class, normalized kernel mass
};

/// Per-class kernel mass over the L nearest reference points, normalized by
/// the total retrieved mass. L is capped at the number of points; distance
/// ties are broken by point index.
template <typename PointsDerived, typename QueryDerived>
Vector<typename PointsDerived::Scalar> neighbour_class_scores(const Eigen::MatrixBase<PointsDerived>& points,
                                                              const std::vector<int>& classes, int class_count,
                                                              typename PointsDerived::Scalar variance, int neighbours,
                                                              const Eigen::MatrixBase<QueryDerived>& query) {
  using Scalar = typename PointsDerived::Scalar;
  const Index p = points.cols();
  std::vector<std::pair<Scalar, Index>> ranked(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) ranked[j] = {(points.col(j) - query).squaredNorm(), j};
  const auto take = static_cast<std::size_t>(std::min<Index>(p, std::max(neighbours, 1)));
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end());
  // Shift by the nearest distance; the common factor cancels in the ratio.
  const Scalar shift = ranked.front().first;
  Vector<Scalar> scores = Vector<Scalar>::Zero(class_count);
  for (std::size_t l = 0; l < take; ++l)
    scores(classes[ranked[l].second]) += std::exp(-(ranked[l].first - shift) / (Scalar(2) * variance));
  return scores / scores.sum();
}

/// First index of the maximum; ties go to the lower class.
template <typename Derived>
int argmax_lowest(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

/// k-nearest-cluster rule over cluster centers.
Classification knc_classify(const EvalContext& ctx, const Eigen::VectorXd& representation);
/// The same rule over individual reference examples.
Classification soft_knn_classify(const EvalContext& ctx, const Eigen::VectorXd& representation);

std::vector<int> classify_all(const EvalContext& ctx, const Eigen::MatrixXd& representations);

/// Fraction of mismatching positions.
double error_rate(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Classes ordered by descending score, ties toward the lower index.
std::vector<int> ranked_classes(const Eigen::VectorXd& scores);

struct AttributePrecision {
  std::vector<int> sizes;
  std::vector<double> precision;       // mean over (example, attribute) incidences
  std::vector<double> standard_error;  // sample std / sqrt(incidences)
  Index incidences = 0;
};

/// For every example and every attribute it features, the fraction of its n
/// nearest neighbours (self excluded) also featuring it, pooled over
/// incidences. `attribute_rows` restricts the attributes used (empty = all).
AttributePrecision attribute_precision(const Eigen::MatrixXd& representations,
                                       const std::optional<Eigen::MatrixXi>& attributes,
                                       const std::vector<int>& sizes,
                                       const std::vector<int>& attribute_rows = {});

enum class HierarchyMethod { knc, soft_knn };

struct HierarchyResult {
  double error_at_1 = 0.0;
  std::optional<double> error_at_5;  // absent with fewer than 5 fine classes
};

struct HierarchyOptions {
  HierarchyMethod method = HierarchyMethod::knc;
  int clusters_per_class = 1;  // K-means per fine class, kNC only
  int neighbours = 128;
  double variance = 1.0;
  std::uint64_t seed = 0;
};

/// Evaluation keyed by fine labels over training representations.
HierarchyResult hierarchy_recovery_eval(const Eigen::MatrixXd& train_reps, const std::vector<int>& train_fine,
                                        const Eigen::MatrixXd& test_reps, const std::vector<int>& test_fine,
                                        const HierarchyOptions& options);

struct EvalReport {
  std::string objective;
  std::string method;  // knc, soft_knn or argmax
  double error_rate = 0.0;
  Index examples = 0;
  Eigen::MatrixXi confusion;  // rows: true class, columns: predicted
  std::optional<AttributePrecision> attributes;
  std::optional<HierarchyResult> hierarchy;
};

Eigen::MatrixXi confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& labels,
                                 int class_count);

std::string report_to_json(const EvalReport& report);
/// Parses and checks a report against its schema; throws ParseError.
EvalReport report_from_json(const std::string& text);

}  // namespace magnet
