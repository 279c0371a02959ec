#pragma once

#include "magnet/common.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace magnet {

template <typename Scalar>
struct KMeansResult {
  Matrix<Scalar> centers;       // dim x K
  std::vector<int> assignment;  // point -> center
  Scalar objective = 0;         // sum of squared distances to assigned centers
  /// Objective after each assignment step, final value last.
  std::vector<Scalar> history;
  int iterations = 0;
};

namespace detail {

template <typename Scalar, typename Derived>
Vector<Scalar> squared_distances(const Eigen::MatrixBase<Derived>& points, const Vector<Scalar>& center) {
  return (points.colwise() - center).colwise().squaredNorm().transpose();
}

/// Nearest center per point, ties toward the lower center index.
template <typename Derived, typename Scalar = typename Derived::Scalar>
Scalar assign_nearest(const Eigen::MatrixBase<Derived>& points, const Matrix<Scalar>& centers,
                      std::vector<int>& assignment) {
  const Index n = points.cols();
  assignment.assign(static_cast<std::size_t>(n), 0);
  Scalar objective = 0;
  for (Index i = 0; i < n; ++i) {
    Index best = 0;
    Scalar best_d = (points.col(i) - centers.col(0)).squaredNorm();
    for (Index k = 1; k < centers.cols(); ++k) {
      const Scalar d = (points.col(i) - centers.col(k)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    assignment[i] = static_cast<int>(best);
    objective += best_d;
  }
  return objective;
}

}  // namespace detail

/// K-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` updates have run. An empty cluster is reseeded at
/// the point farthest from its current center. Deterministic given `seed`.
template <typename Derived>
KMeansResult<typename Derived::Scalar> kmeans(const Eigen::MatrixBase<Derived>& points, int k,
                                              std::uint64_t seed, int max_iters = 100) {
  using Scalar = typename Derived::Scalar;
  const Index n = points.cols();
  if (k < 1 || k > n)
    throw ConfigError("kmeans: K=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  if (max_iters < 1) throw ConfigError("kmeans: max_iters must be >= 1");

  std::mt19937_64 rng(seed);
  KMeansResult<Scalar> result;
  auto& centers = result.centers;
  centers.resize(points.rows(), k);

  // K-means++: first center uniform, then proportional to squared distance.
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  Index first = std::uniform_int_distribution<Index>(0, n - 1)(rng);
  centers.col(0) = points.col(first);
  chosen[first] = 1;
  Vector<Scalar> nearest = detail::squared_distances<Scalar>(points, Vector<Scalar>(centers.col(0)));
  for (int c = 1; c < k; ++c) {
    const Scalar total = nearest.sum();
    Index pick = -1;
    if (total > Scalar(0)) {
      const Scalar u = std::uniform_real_distribution<Scalar>(0, total)(rng);
      Scalar acc = 0;
      for (Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (nearest(i) > Scalar(0) && u < acc) {
          pick = i;
          break;
        }
      }
      if (pick < 0)
        for (Index i = n; i-- > 0;)
          if (nearest(i) > Scalar(0)) {
            pick = i;
            break;
          }
    } else {
      // Every point coincides with a chosen center: take an unused index.
      std::vector<Index> free;
      for (Index i = 0; i < n; ++i)
        if (!chosen[i]) free.push_back(i);
      pick = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    centers.col(c) = points.col(pick);
    chosen[pick] = 1;
    nearest = nearest.cwiseMin(detail::squared_distances<Scalar>(points, Vector<Scalar>(centers.col(c))));
  }

  auto& assignment = result.assignment;
  result.history.push_back(detail::assign_nearest(points, centers, assignment));

  std::vector<Index> counts;
  auto update_means = [&]() -> bool {
    counts.assign(static_cast<std::size_t>(k), 0);
    Matrix<Scalar> sums = Matrix<Scalar>::Zero(points.rows(), k);
    for (Index i = 0; i < n; ++i) {
      sums.col(assignment[i]) += points.col(i);
      ++counts[assignment[i]];
    }
    bool reseeded = false;
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.col(c) = sums.col(c) / static_cast<Scalar>(counts[c]);
        continue;
      }
      // Farthest point from the center it is currently assigned to.
      Index far = -1;
      Scalar far_d = -1;
      for (Index i = 0; i < n; ++i) {
        if (taken[i]) continue;
        const Scalar d = (points.col(i) - centers.col(assignment[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centers.col(c) = points.col(far);
      taken[far] = 1;
      reseeded = true;
    }
    return reseeded;
  };

  std::vector<int> next;
  for (int it = 0; it < max_iters; ++it) {
    const bool reseeded = update_means();
    const Scalar objective = detail::assign_nearest(points, centers, next);
    ++result.iterations;
    const bool converged = !reseeded && next == assignment;
    assignment.swap(next);
    result.history.push_back(objective);
    if (converged) break;
  }

  // Final centers are the means of the final assignment.
  counts.assign(static_cast<std::size_t>(k), 0);
  Matrix<Scalar> sums = Matrix<Scalar>::Zero(points.rows(), k);
  for (Index i = 0; i < n; ++i) {
    sums.col(assignment[i]) += points.col(i);
    ++counts[assignment[i]];
  }
  for (int c = 0; c < k; ++c)
    if (counts[c] > 0) centers.col(c) = sums.col(c) / static_cast<Scalar>(counts[c]);
  result.objective = 0;
  for (Index i = 0; i < n; ++i) result.objective += (points.col(i) - centers.col(assignment[i])).squaredNorm();
  result.history.push_back(result.objective);
  return result;
}

}  // namespace magnet
