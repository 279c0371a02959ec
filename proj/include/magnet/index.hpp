#pragma once

#include "magnet/common.hpp"
#include "magnet/data.hpp"
#include "magnet/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace magnet {

/// Per-class K-means clusters over representations computed at one model
/// state. Clusters are numbered flat: class 0's clusters first, and so on.
class ClusterIndex {
 public:
  ClusterIndex() = default;

  int class_count() const { return static_cast<int>(class_offsets_.size()) - 1; }
  int cluster_count() const { return class_offsets_.empty() ? 0 : class_offsets_.back(); }
  Index example_count() const { return static_cast<Index>(assignment_.size()); }
  Index dim() const { return centers_.rows(); }

  int flat_id(int cls, int k) const { return class_offsets_[cls] + k; }
  int clusters_in_class(int cls) const { return class_offsets_[cls + 1] - class_offsets_[cls]; }
  int cluster_class(int cluster) const { return cluster_class_[cluster]; }
  /// (class, within-class index) of a flat cluster id.
  std::pair<int, int> cluster_key(int cluster) const {
    const int c = cluster_class_[cluster];
    return {c, cluster - class_offsets_[c]};
  }

  /// All centers, one column per flat cluster id.
  const Eigen::MatrixXd& centers() const { return centers_; }
  Eigen::MatrixXd class_centers(int cls) const {
    return centers_.middleCols(class_offsets_[cls], clusters_in_class(cls));
  }
  const std::vector<int>& members(int cluster) const { return members_[cluster]; }
  int assignment(Index example) const { return assignment_[example]; }
  const std::vector<int>& assignments() const { return assignment_; }

  /// Σ ||r - μ(r)||² / (N - 1), floored at kVarianceFloor.
  double variance() const { return variance_; }
  long built_at_iteration() const { return built_at_; }

  const std::vector<std::optional<double>>& loss_cache() const { return loss_cache_; }
  void set_loss_cache(std::vector<std::optional<double>> cache);

  /// Mean cached loss over present members; falls back to the global mean of
  /// cached losses, then to 1.0.
  double cluster_mean_loss(int cluster) const;
  std::optional<double> global_mean_loss() const;

  void update_loss_cache(const std::vector<std::pair<int, double>>& example_losses);

  std::string to_json() const;

  friend ClusterIndex build_index_from_representations(const Eigen::MatrixXd&, const std::vector<int>&, int,
                                                       const std::vector<int>&, std::uint64_t, long,
                                                       const ClusterIndex*);

 private:
  Eigen::MatrixXd centers_;
  std::vector<int> class_offsets_;
  std::vector<int> cluster_class_;
  std::vector<std::vector<int>> members_;
  std::vector<int> assignment_;
  std::vector<std::optional<double>> loss_cache_;
  double variance_ = kVarianceFloor;
  long built_at_ = 0;
};

/// K per class; a single entry is broadcast to every class.
std::vector<int> expand_cluster_counts(const std::vector<int>& k, int class_count);

/// K-means per class over `representations` (dim x N). The loss cache is
/// carried over from `previous` by example index.
ClusterIndex build_index_from_representations(const Eigen::MatrixXd& representations,
                                              const std::vector<int>& labels, int class_count,
                                              const std::vector<int>& k, std::uint64_t seed,
                                              long iteration = 0, const ClusterIndex* previous = nullptr);

/// Forward pass of every input against the frozen `snapshot`, then
/// build_index_from_representations.
ClusterIndex build_index(const Mlp& snapshot, const Dataset& data, const std::vector<int>& k,
                         std::uint64_t seed, long iteration = 0, const ClusterIndex* previous = nullptr);

struct ImpostorClusters {
  std::vector<int> clusters;  // ascending center distance, ties by id
  bool truncated = false;     // fewer than requested were available
};

/// Up to `count` non-empty clusters of other classes, nearest first.
ImpostorClusters nearest_impostor_clusters(const ClusterIndex& index, int seed_cluster, int count);

}  // namespace magnet
