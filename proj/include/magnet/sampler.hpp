#pragma once

#include "magnet/data.hpp"
#include "magnet/index.hpp"
#include "magnet/losses.hpp"

#include <random>
#include <vector>

namespace magnet {

/// One magnet minibatch: a seed cluster, its nearest impostor clusters and
/// D examples from each.
struct Neighbourhood {
  std::vector<int> clusters;     // flat cluster ids, seed first
  std::vector<int> examples;     // dataset indices, D per cluster, cluster-major
  std::vector<int> position_of;  // example slot -> position in `clusters`
  std::vector<int> cluster_class;
  bool with_replacement = false;  // some cluster had fewer than D members
  bool truncated = false;         // fewer than M - 1 impostor clusters existed

  BatchLayout layout() const { return {position_of, cluster_class}; }
};

/// p(I) ∝ mean cached loss of cluster I; empty clusters get 0. Falls back to
/// uniform over non-empty clusters when all mass is zero.
Eigen::VectorXd seed_distribution(const ClusterIndex& index);

Neighbourhood sample_neighbourhood(const ClusterIndex& index, int m, int d, std::mt19937_64& rng);

/// Dataset indices of a seed, a same-class positive and an other-class negative.
struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
};

/// Anchors uniform over examples whose class has a second member; negatives
/// uniform among the ceil(fraction * pool) other-class examples nearest to
/// the anchor in `reps` (fraction 1 means uniform negatives).
std::vector<Triplet> sample_triplets(const Eigen::MatrixXd& reps, const std::vector<int>& labels, int count,
                                     double impostor_fraction, std::mt19937_64& rng);

}  // namespace magnet
