#include "magnet/ncm.hpp"

#include "magnet/kmeans.hpp"

#include <cmath>
#include <limits>

namespace magnet {

std::vector<Eigen::MatrixXd> fit_class_centroids(const Dataset& data, NcmMode mode, int k, std::uint64_t seed) {
  const auto members = data.class_members();
  std::vector<Eigen::MatrixXd> out;
  for (int c = 0; c < data.class_count; ++c) {
    Eigen::MatrixXd points(data.dim(), static_cast<Index>(members[c].size()));
    for (std::size_t j = 0; j < members[c].size(); ++j)
      points.col(static_cast<Index>(j)) = data.inputs.col(members[c][j]);
    if (mode == NcmMode::single_mean) {
      out.push_back(points.rowwise().mean());
    } else {
      out.push_back(kmeans(points, k, derive_seed(seed, 0x9c3, static_cast<std::uint64_t>(c))).centers);
    }
  }
  return out;
}

NcmLoss ncm_loss(const NcmModel& model, const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
                 NcmMode mode) {
  const Index n = inputs.cols();
  const Index classes = static_cast<Index>(model.centroids.size());
  if (inputs.rows() != model.transform.cols()) throw ShapeError("inputs do not match the NCM transform");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("labels do not match inputs");
  if (mode == NcmMode::single_mean)
    for (const auto& c : model.centroids)
      if (c.cols() != 1) throw ContractError("single-mean NCM expects one centroid per class");

  NcmLoss out;
  out.losses.resize(n);
  out.grad_transform = Eigen::MatrixXd::Zero(model.transform.rows(), model.transform.cols());
  if (n == 0) return out;
  const double weight = 1.0 / static_cast<double>(n);

  Eigen::VectorXd scores(classes);
  std::vector<Eigen::VectorXd> offsets(static_cast<std::size_t>(classes));
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < classes; ++c) {
      const auto& cent = model.centroids[c];
      double best = std::numeric_limits<double>::infinity();
      for (Index k = 0; k < cent.cols(); ++k) {
        Eigen::VectorXd u = inputs.col(i) - cent.col(k);
        const double d = (model.transform * u).squaredNorm();
        if (d < best) {
          best = d;
          offsets[c] = std::move(u);
        }
      }
      scores(c) = -best;
    }
    const double lse = log_sum_exp(scores);
    const int y = labels[i];
    out.losses(i) = lse - scores(y);
    // dℓ/dδ_c = [c = y] - p_c, dδ_c/dW = 2 (W u_c) u_cᵀ.
    for (Index c = 0; c < classes; ++c) {
      const double coef = (c == y ? 1.0 : 0.0) - std::exp(scores(c) - lse);
      if (coef == 0.0) continue;
      out.grad_transform.noalias() += (weight * coef * 2.0) * (model.transform * offsets[c]) * offsets[c].transpose();
    }
  }
  out.mean_loss = out.losses.sum() * weight;
  return out;
}

NcmRepresentationLoss ncm_representation_loss(const Eigen::MatrixXd& representations,
                                              const Eigen::MatrixXd& centroids,
                                              const std::vector<int>& centroid_classes, int class_count,
                                              const std::vector<int>& labels) {
  const Index n = representations.cols();
  if (centroids.rows() != representations.rows()) throw ShapeError("centroids do not match representations");
  if (static_cast<Index>(centroid_classes.size()) != centroids.cols()) throw ShapeError("one class per centroid");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("labels do not match representations");
  std::vector<int> per_class(static_cast<std::size_t>(class_count), 0);
  for (int c : centroid_classes) {
    if (c < 0 || c >= class_count) throw ContractError("centroid class out of range");
    ++per_class[c];
  }
  for (int c = 0; c < class_count; ++c)
    if (per_class[c] == 0) throw ContractError("class " + std::to_string(c) + " has no centroid");

  NcmRepresentationLoss out;
  out.losses.resize(n);
  out.grad_representations = Eigen::MatrixXd::Zero(representations.rows(), n);
  out.grad_centroids = Eigen::MatrixXd::Zero(centroids.rows(), centroids.cols());
  if (n == 0) return out;
  const double weight = 1.0 / static_cast<double>(n);

  Eigen::VectorXd scores(class_count), second(class_count);
  std::vector<Index> nearest(static_cast<std::size_t>(class_count));
  for (Index i = 0; i < n; ++i) {
    scores.setConstant(-std::numeric_limits<double>::infinity());
    second.setConstant(std::numeric_limits<double>::infinity());
    for (Index j = 0; j < centroids.cols(); ++j) {
      const int c = centroid_classes[j];
      const double d = (representations.col(i) - centroids.col(j)).squaredNorm();
      if (-d > scores(c)) {
        if (std::isfinite(scores(c))) second(c) = -scores(c);
        scores(c) = -d;
        nearest[c] = j;
      } else if (d < second(c)) {
        second(c) = d;
      }
    }
    for (int c = 0; c < class_count; ++c)
      if (per_class[c] > 1) out.switch_margins.push_back(second(c) + scores(c));
    const double lse = log_sum_exp(scores);
    const int y = labels[i];
    out.losses(i) = lse - scores(y);
    for (int c = 0; c < class_count; ++c) {
      const double coef = (c == y ? 1.0 : 0.0) - std::exp(scores(c) - lse);
      const Eigen::VectorXd g = (weight * coef * 2.0) * (representations.col(i) - centroids.col(nearest[c]));
      out.grad_representations.col(i) += g;
      out.grad_centroids.col(nearest[c]) -= g;
    }
  }
  out.mean_loss = out.losses.sum() * weight;
  return out;
}

Eigen::MatrixXd projected_centroids(const NcmModel& model, std::vector<int>& classes) {
  Index total = 0;
  for (const auto& c : model.centroids) total += c.cols();
  Eigen::MatrixXd out(model.transform.rows(), total);
  classes.clear();
  Index col = 0;
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    out.middleCols(col, model.centroids[c].cols()) = model.transform * model.centroids[c];
    col += model.centroids[c].cols();
    classes.insert(classes.end(), static_cast<std::size_t>(model.centroids[c].cols()), static_cast<int>(c));
  }
  return out;
}

}  // namespace magnet
