#pragma once

#include "magnet/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace magnet {

/// Labelled feature vectors, one example per column.
struct Dataset {
  Eigen::MatrixXd inputs;  // dim x N
  std::vector<int> labels;
  std::optional<Eigen::MatrixXi> attributes;  // A x N, entries 0/1
  int class_count = 0;
  /// Raw label value of each class index, as read from file.
  std::vector<long long> class_values;

  Index size() const { return inputs.cols(); }
  Index dim() const { return inputs.rows(); }
  bool has_attributes() const { return attributes.has_value(); }

  /// Throws ContractError when any invariant is broken.
  void validate() const;

  /// Examples at `indices` in that order. class_count is preserved.
  Dataset subset(const std::vector<int>& indices) const;

  /// Example indices grouped by class.
  std::vector<std::vector<int>> class_members() const;
};

struct MixtureMode {
  Eigen::VectorXd center;
  double stddev = 0.0;
  int count = 0;
  std::vector<int> attributes;  // empty when no attribute rule applies
};

struct MixtureSpec {
  std::vector<std::vector<MixtureMode>> classes;
  /// Extra attribute columns drawn Bernoulli(rate) independently of geometry.
  std::vector<double> random_attribute_rates;

  void validate() const;
};

/// Isotropic Gaussian draws per mode, classes in order, modes in order.
Dataset generate_mixture(const MixtureSpec& spec, std::uint64_t seed);

/// 2 classes, 2 modes each on the corners of a square (XOR layout), so each
/// mode adjoins two modes of the opposite class.
MixtureSpec interleaved_benchmark(int points_per_class = 500, double stddev = 0.4);

/// `fine_classes` well-separated modes on a circle of radius 3, one mode per
/// class.
MixtureSpec hierarchy_benchmark(int fine_classes = 8, int points_per_class = 150,
                                double stddev = 0.25);

/// 4 classes x 2 modes in 2-D. Each mode carries a binary attribute pattern
/// shared across classes, plus one geometry-independent attribute.
MixtureSpec attribute_benchmark(int points_per_mode = 120, double stddev = 0.3);

MixtureSpec mixture_spec_from_json(const std::string& text);
std::string mixture_spec_to_json(const MixtureSpec& spec);

/// CSV with header `label,f0,...`; labels remapped densely in order of first
/// appearance. `attributes_path`, when given, is a row-aligned `a0,...` file.
/// A non-empty `class_values` fixes the mapping instead (raw value of each
/// class index); unknown labels are then errors and classes may be absent.
Dataset load_dataset(const std::string& path,
                     const std::optional<std::string>& attributes_path = std::nullopt,
                     const std::vector<long long>& class_values = {});

void save_dataset(const Dataset& data, const std::string& path,
                  const std::optional<std::string>& attributes_path = std::nullopt);

/// Stratified split: per class floor(fraction * count) test examples, at
/// least one. Both halves keep the input's relative order.
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction,
                                  std::uint64_t seed);

struct CollapsedLabels {
  Dataset data;                  // labels are superclass indices
  std::vector<int> fine_labels;  // original labels, row-aligned
};

/// Pair i becomes superclass i.
CollapsedLabels collapse_labels(const Dataset& data,
                                const std::vector<std::pair<int, int>>& pairing);

/// Uniform random perfect matching of [0, C); C must be even.
std::vector<std::pair<int, int>> random_pairing(int class_count, std::uint64_t seed);

}  // namespace magnet
