#pragma once

#include "magnet/common.hpp"
#include "magnet/data.hpp"

#include <cstdint>
#include <vector>

namespace magnet {

enum class NcmMode { single_mean, multi_centroid };

/// Linear map trained against class centroids fixed on the raw inputs.
struct NcmModel {
  Eigen::MatrixXd transform;                // out_dim x input_dim
  std::vector<Eigen::MatrixXd> centroids;  // per class, input_dim x K_c
};

/// Class means (single_mean) or K-means centroids per class (multi_centroid)
/// of the raw training inputs. Computed once; training never updates them.
std::vector<Eigen::MatrixXd> fit_class_centroids(const Dataset& data, NcmMode mode, int k, std::uint64_t seed);

struct NcmLoss {
  double mean_loss = 0.0;
  Eigen::VectorXd losses;
  Eigen::MatrixXd grad_transform;
};

/// Per example -log softmax_c(-||W x - W μ_c||²). In multi_centroid mode each
/// class is scored by its nearest centroid under W.
NcmLoss ncm_loss(const NcmModel& model, const Eigen::MatrixXd& inputs, const std::vector<int>& labels, NcmMode mode);

struct NcmRepresentationLoss {
  double mean_loss = 0.0;
  Eigen::VectorXd losses;
  Eigen::MatrixXd grad_representations;  // r x N
  Eigen::MatrixXd grad_centroids;        // r x total centroids
  /// Per example and class with several centroids, nearest minus runner-up distance.
  std::vector<double> switch_margins;
};

/// The NCM objective on embedded examples against embedded centroids, where
/// column j of `centroids` belongs to class `centroid_classes[j]`. Equals
/// ncm_loss when both are produced by the same linear map.
NcmRepresentationLoss ncm_representation_loss(const Eigen::MatrixXd& representations,
                                              const Eigen::MatrixXd& centroids,
                                              const std::vector<int>& centroid_classes, int class_count,
                                              const std::vector<int>& labels);

/// Projected centroids (W μ) as columns, with the class of each column.
Eigen::MatrixXd projected_centroids(const NcmModel& model, std::vector<int>& classes);

}  // namespace magnet
