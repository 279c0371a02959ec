#pragma once

#include "magnet/common.hpp"
#include "magnet/model.hpp"

#include <vector>

namespace magnet {

class ClusterIndex;

struct MagnetConfig {
  double alpha = 1.0;  // separation gap, in units of variance
  bool variance_normalization = true;
};

/// Cluster bookkeeping of a minibatch: example -> batch cluster position,
/// batch cluster position -> class.
struct BatchLayout {
  std::vector<int> cluster_of;
  std::vector<int> cluster_class;
};

template <typename Scalar>
struct MagnetLoss {
  Scalar mean_loss = 0;
  Vector<Scalar> losses;       // per example, after the hinge
  Matrix<Scalar> gradients;    // d(mean_loss)/d(representations)
  Scalar variance = 0;         // batch estimate, after flooring
  Vector<Scalar> hinge_arguments;
};

/// Pre-hinge magnet term for one example:
///   scale * own + alpha + log Σ_m exp(-scale * impostor_m)
/// where `own` is the squared distance to its cluster center and
/// `impostors` the squared distances to centers of other classes.
template <typename Scalar, typename Derived>
Scalar magnet_term(Scalar own, const Eigen::MatrixBase<Derived>& impostors, Scalar alpha, Scalar scale) {
  if (impostors.size() == 0) throw ContractError("magnet term needs at least one impostor center");
  return scale * own + alpha + log_sum_exp(Vector<Scalar>(-scale * impostors.derived().template cast<Scalar>()));
}

/// Stochastic magnet objective over a neighbourhood. Cluster centers are the
/// within-batch sample means, the variance is pooled with divisor (N - 1) and
/// floored at kVarianceFloor, and exponents are divided by 2 * variance.
/// Gradients flow through the sample means and the variance estimate.
template <typename Derived>
MagnetLoss<typename Derived::Scalar> magnet_minibatch_loss(const Eigen::MatrixBase<Derived>& reps,
                                                           const BatchLayout& layout,
                                                           const MagnetConfig& config) {
  using Scalar = typename Derived::Scalar;
  const Index n = reps.cols();
  const Index m = static_cast<Index>(layout.cluster_class.size());
  if (static_cast<Index>(layout.cluster_of.size()) != n) throw ShapeError("layout does not match batch size");
  if (n < 2) throw ContractError("magnet loss needs at least two examples");

  std::vector<Index> counts(static_cast<std::size_t>(m), 0);
  Matrix<Scalar> means = Matrix<Scalar>::Zero(reps.rows(), m);
  for (Index i = 0; i < n; ++i) {
    const int c = layout.cluster_of[i];
    if (c < 0 || c >= m) throw ContractError("example assigned to unknown batch cluster");
    means.col(c) += reps.col(i);
    ++counts[c];
  }
  for (Index c = 0; c < m; ++c)
    if (counts[c] > 0) means.col(c) /= static_cast<Scalar>(counts[c]);

  Matrix<Scalar> dist(m, n);  // squared distance, cluster mean to example
  for (Index i = 0; i < n; ++i)
    dist.col(i) = (means.colwise() - reps.col(i)).colwise().squaredNorm().transpose();

  Scalar sum_sq = 0;
  for (Index i = 0; i < n; ++i) sum_sq += dist(layout.cluster_of[i], i);
  const Scalar raw_variance = sum_sq / static_cast<Scalar>(n - 1);
  const bool floored = raw_variance < Scalar(kVarianceFloor);
  MagnetLoss<Scalar> out;
  out.variance = floored ? Scalar(kVarianceFloor) : raw_variance;
  const Scalar scale = config.variance_normalization ? Scalar(1) / (Scalar(2) * out.variance) : Scalar(1);
  const Scalar alpha = static_cast<Scalar>(config.alpha);

  out.losses.resize(n);
  out.hinge_arguments.resize(n);
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(reps.rows(), n);
  Matrix<Scalar> grad_means = Matrix<Scalar>::Zero(reps.rows(), m);
  Scalar grad_scale = 0;
  const Scalar weight = Scalar(1) / static_cast<Scalar>(n);

  std::vector<Index> impostors;
  for (Index i = 0; i < n; ++i) {
    const int own = layout.cluster_of[i];
    const int cls = layout.cluster_class[own];
    impostors.clear();
    for (Index c = 0; c < m; ++c)
      if (layout.cluster_class[c] != cls && counts[c] > 0) impostors.push_back(c);
    if (impostors.empty()) throw ContractError("example has no impostor cluster in its batch");

    Vector<Scalar> imp(static_cast<Index>(impostors.size()));
    for (Index j = 0; j < imp.size(); ++j) imp(j) = dist(impostors[j], i);
    const Scalar z = magnet_term(dist(own, i), imp, alpha, scale);
    out.hinge_arguments(i) = z;
    out.losses(i) = hinge(z);
    if (!(z > Scalar(0))) continue;

    Vector<Scalar> w = -scale * imp;
    w = (w.array() - w.maxCoeff()).exp();
    w /= w.sum();

    const Vector<Scalar> to_own = reps.col(i) - means.col(own);
    grad.col(i) += weight * Scalar(2) * scale * to_own;
    grad_means.col(own) -= weight * Scalar(2) * scale * to_own;
    Scalar expected = 0;
    for (Index j = 0; j < imp.size(); ++j) {
      const Vector<Scalar> to_imp = reps.col(i) - means.col(impostors[j]);
      grad.col(i) -= weight * w(j) * Scalar(2) * scale * to_imp;
      grad_means.col(impostors[j]) += weight * w(j) * Scalar(2) * scale * to_imp;
      expected += w(j) * imp(j);
    }
    grad_scale += weight * (dist(own, i) - expected);
  }
  out.mean_loss = out.losses.sum() / static_cast<Scalar>(n);

  // Chain through the means (dμ_c/dr_i = 1/n_c) and the variance
  // (scale = 1/(2 var), var = Σ||r - μ||² / (n - 1)).
  Scalar grad_sum_sq = 0;
  if (config.variance_normalization && !floored) {
    const Scalar grad_var = -grad_scale / (Scalar(2) * out.variance * out.variance);
    grad_sum_sq = grad_var / static_cast<Scalar>(n - 1);
  }
  for (Index i = 0; i < n; ++i) {
    const int own = layout.cluster_of[i];
    grad.col(i) += grad_means.col(own) / static_cast<Scalar>(counts[own]);
    if (grad_sum_sq != Scalar(0)) grad.col(i) += grad_sum_sq * Scalar(2) * (reps.col(i) - means.col(own));
  }
  out.gradients = std::move(grad);
  return out;
}

/// Full-dataset magnet objective with fixed centers and variance (no
/// gradients). `center_class[k]` tags column k of `centers`; `assignment[i]`
/// is example i's own center. Centers flagged in `skip` are left out of
/// every denominator.
template <typename Derived, typename CentersDerived>
typename Derived::Scalar magnet_objective(const Eigen::MatrixBase<Derived>& reps, const std::vector<int>& labels,
                                          const Eigen::MatrixBase<CentersDerived>& centers,
                                          const std::vector<int>& center_class, const std::vector<int>& assignment,
                                          typename Derived::Scalar variance, const MagnetConfig& config,
                                          const std::vector<char>& skip = {}) {
  using Scalar = typename Derived::Scalar;
  const Index n = reps.cols();
  if (n == 0) return Scalar(0);
  const Scalar var = std::max(variance, Scalar(kVarianceFloor));
  const Scalar scale = config.variance_normalization ? Scalar(1) / (Scalar(2) * var) : Scalar(1);
  Scalar total = 0;
  std::vector<Scalar> imp;
  for (Index i = 0; i < n; ++i) {
    imp.clear();
    for (Index k = 0; k < centers.cols(); ++k) {
      if (!skip.empty() && skip[k]) continue;
      if (center_class[k] != labels[i]) imp.push_back((reps.col(i) - centers.col(k)).squaredNorm());
    }
    const Scalar own = (reps.col(i) - centers.col(assignment[i])).squaredNorm();
    const auto imp_vec = Eigen::Map<const Vector<Scalar>>(imp.data(), static_cast<Index>(imp.size()));
    total += hinge(magnet_term(own, imp_vec, static_cast<Scalar>(config.alpha), scale));
  }
  return total / static_cast<Scalar>(n);
}

/// Magnet objective with the index's centers, assignments and global variance.
double magnet_full_objective(const ClusterIndex& index, const Eigen::MatrixXd& reps, const std::vector<int>& labels,
                             const MagnetConfig& config);

/// Magnet with two seed samples and one impostor sample, no variance
/// normalization. Each seed sample's cluster center is the other seed
/// sample, so the result is the symmetrized pair of triplet terms.
template <typename DerivedA, typename DerivedB, typename DerivedN>
typename DerivedA::Scalar magnet_as_triplet(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                                            const Eigen::MatrixBase<DerivedN>& impostor,
                                            typename DerivedA::Scalar alpha) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar pair = (a - b).squaredNorm();
  Vector<Scalar> to_impostor(1);
  to_impostor(0) = (a - impostor).squaredNorm();
  Scalar total = hinge(magnet_term(pair, to_impostor, alpha, Scalar(1)));
  to_impostor(0) = (b - impostor).squaredNorm();
  total += hinge(magnet_term(pair, to_impostor, alpha, Scalar(1)));
  return total;
}

template <typename Scalar>
struct TripletLoss {
  Scalar mean_loss = 0;
  Vector<Scalar> losses;
  Matrix<Scalar> grad_anchor, grad_positive, grad_negative;
  Vector<Scalar> hinge_arguments;
};

namespace detail {

/// Columns scaled to unit length; zero columns stay zero.
template <typename Scalar>
Matrix<Scalar> normalize_columns(const Matrix<Scalar>& m, Vector<Scalar>& norms) {
  norms = m.colwise().norm().transpose();
  Matrix<Scalar> out = m;
  for (Index j = 0; j < m.cols(); ++j)
    if (norms(j) > Scalar(0)) out.col(j) /= norms(j);
  return out;
}

/// Backprop through x / ||x||: (g - u (u·g)) / ||x||.
template <typename Scalar>
Matrix<Scalar> normalize_backward(const Matrix<Scalar>& unit, const Vector<Scalar>& norms, const Matrix<Scalar>& g) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(g.rows(), g.cols());
  for (Index j = 0; j < g.cols(); ++j)
    if (norms(j) > Scalar(0))
      out.col(j) = (g.col(j) - unit.col(j) * unit.col(j).dot(g.col(j))) / norms(j);
  return out;
}

}  // namespace detail

/// Mean over columns of hinge(||a - p||² - ||a - n||² + alpha). Hinge
/// subgradient at 0 is 0. With `normalize`, columns are scaled to unit length
/// before the loss.
template <typename DA, typename DP, typename DN>
TripletLoss<typename DA::Scalar> triplet_loss(const Eigen::MatrixBase<DA>& anchors,
                                              const Eigen::MatrixBase<DP>& positives,
                                              const Eigen::MatrixBase<DN>& negatives, double alpha,
                                              bool normalize = false) {
  using Scalar = typename DA::Scalar;
  const Index n = anchors.cols();
  if (positives.cols() != n || negatives.cols() != n || positives.rows() != anchors.rows() ||
      negatives.rows() != anchors.rows())
    throw ShapeError("triplet operands differ in shape");
  Matrix<Scalar> a = anchors, p = positives, q = negatives;
  Vector<Scalar> na, np, nq;
  if (normalize) {
    a = detail::normalize_columns<Scalar>(a, na);
    p = detail::normalize_columns<Scalar>(p, np);
    q = detail::normalize_columns<Scalar>(q, nq);
  }
  TripletLoss<Scalar> out;
  out.losses.resize(n);
  out.hinge_arguments.resize(n);
  out.grad_anchor = Matrix<Scalar>::Zero(a.rows(), n);
  out.grad_positive = Matrix<Scalar>::Zero(a.rows(), n);
  out.grad_negative = Matrix<Scalar>::Zero(a.rows(), n);
  if (n == 0) return out;
  const Scalar weight = Scalar(1) / static_cast<Scalar>(n);
  for (Index j = 0; j < n; ++j) {
    const Vector<Scalar> dp = a.col(j) - p.col(j);
    const Vector<Scalar> dn = a.col(j) - q.col(j);
    const Scalar z = dp.squaredNorm() - dn.squaredNorm() + static_cast<Scalar>(alpha);
    out.hinge_arguments(j) = z;
    out.losses(j) = hinge(z);
    if (!(z > Scalar(0))) continue;
    out.grad_anchor.col(j) = weight * Scalar(2) * (dp - dn);
    out.grad_positive.col(j) = -weight * Scalar(2) * dp;
    out.grad_negative.col(j) = weight * Scalar(2) * dn;
  }
  out.mean_loss = out.losses.sum() * weight;
  if (normalize) {
    out.grad_anchor = detail::normalize_backward<Scalar>(a, na, out.grad_anchor);
    out.grad_positive = detail::normalize_backward<Scalar>(p, np, out.grad_positive);
    out.grad_negative = detail::normalize_backward<Scalar>(q, nq, out.grad_negative);
  }
  return out;
}

template <typename Scalar>
struct NcaLoss {
  Scalar mean_loss = 0;  // quiet NaN when every example was skipped
  Vector<Scalar> losses;  // NaN for skipped examples
  Matrix<Scalar> gradients;
  Index skipped = 0;
};

/// -log(Σ_same exp(-d²) / Σ_all exp(-d²)) per example, self excluded from
/// both sums. Examples without a same-class peer are skipped.
template <typename Derived>
NcaLoss<typename Derived::Scalar> nca_loss(const Eigen::MatrixBase<Derived>& reps, const std::vector<int>& labels) {
  using Scalar = typename Derived::Scalar;
  const Index n = reps.cols();
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("labels do not match representations");
  NcaLoss<Scalar> out;
  out.losses = Vector<Scalar>::Constant(n, std::numeric_limits<Scalar>::quiet_NaN());
  out.gradients = Matrix<Scalar>::Zero(reps.rows(), n);

  std::vector<char> valid(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < n && !valid[i]; ++k)
      if (k != i && labels[k] == labels[i]) valid[i] = 1;
    if (!valid[i]) ++out.skipped;
  }
  const Index used = n - out.skipped;
  if (used == 0) {
    out.mean_loss = std::numeric_limits<Scalar>::quiet_NaN();
    return out;
  }
  const Scalar weight = Scalar(1) / static_cast<Scalar>(used);

  Scalar total = 0;
  Vector<Scalar> neg(n), same(n);
  for (Index i = 0; i < n; ++i) {
    if (!valid[i]) continue;
    const Vector<Scalar> d = (reps.colwise() - reps.col(i)).colwise().squaredNorm().transpose();
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    for (Index k = 0; k < n; ++k) {
      neg(k) = k == i ? -inf : -d(k);
      same(k) = (k == i || labels[k] != labels[i]) ? -inf : -d(k);
    }
    const Scalar lse_all = log_sum_exp(neg);
    const Scalar lse_same = log_sum_exp(same);
    const Scalar loss = lse_all - lse_same;
    out.losses(i) = loss;
    total += loss;
    // dℓ/dd_k = q_k [same] - p_k, with p, q the all/same softmax weights.
    for (Index k = 0; k < n; ++k) {
      if (k == i) continue;
      const Scalar p = std::exp(neg(k) - lse_all);
      const Scalar q = labels[k] == labels[i] ? std::exp(same(k) - lse_same) : Scalar(0);
      const Scalar coef = weight * (q - p);
      if (coef == Scalar(0)) continue;
      const Vector<Scalar> diff = Scalar(2) * (reps.col(i) - reps.col(k));
      out.gradients.col(i) += coef * diff;
      out.gradients.col(k) -= coef * diff;
    }
  }
  out.mean_loss = total * weight;
  return out;
}

template <typename Scalar>
struct CrossEntropy {
  Scalar mean_loss = 0;
  Vector<Scalar> losses;
  Matrix<Scalar> grad_logits;
};

/// Softmax cross-entropy over logit columns (C x N).
template <typename Derived>
CrossEntropy<typename Derived::Scalar> cross_entropy(const Eigen::MatrixBase<Derived>& logits,
                                                     const std::vector<int>& labels) {
  using Scalar = typename Derived::Scalar;
  const Index n = logits.cols();
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("labels do not match logits");
  CrossEntropy<Scalar> out;
  out.losses.resize(n);
  out.grad_logits.resize(logits.rows(), n);
  for (Index i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= logits.rows()) throw ContractError("label outside classifier range");
    const Vector<Scalar> col = logits.col(i);
    const Scalar lse = log_sum_exp(col);
    out.losses(i) = lse - col(labels[i]);
    out.grad_logits.col(i) = (col.array() - lse).exp().matrix();
    out.grad_logits(labels[i], i) -= Scalar(1);
  }
  const Scalar weight = n > 0 ? Scalar(1) / static_cast<Scalar>(n) : Scalar(0);
  out.mean_loss = out.losses.sum() * weight;
  out.grad_logits *= weight;
  return out;
}

struct SoftmaxLoss {
  double mean_loss = 0.0;
  Parameters head_gradients;
  Eigen::MatrixXd representation_gradients;
};

/// Cross-entropy of a classifier head (an Mlp mapping representations to C
/// logits) with gradients for the head and the representations.
SoftmaxLoss softmax_xent(const Mlp& head, const Eigen::MatrixXd& reps, const std::vector<int>& labels);

}  // namespace magnet
