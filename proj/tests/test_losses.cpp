#include "helpers.hpp"

#include "magnet/index.hpp"
#include "magnet/losses.hpp"
#include "magnet/ncm.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace magnet;

namespace {

Eigen::MatrixXd row(std::initializer_list<double> values) {
  Eigen::MatrixXd m(1, static_cast<Index>(values.size()));
  Index j = 0;
  for (double v : values) m(0, j++) = v;
  return m;
}

// scalar re-evaluation of the stochastic magnet objective
double magnet_oracle(const Eigen::MatrixXd& r, const std::vector<int>& cluster_of, const std::vector<int>& cls,
                     double alpha, bool normalize) {
  const std::size_t m = cls.size(), n = cluster_of.size();
  std::vector<Eigen::VectorXd> mu(m, Eigen::VectorXd::Zero(r.rows()));
  std::vector<double> count(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    mu[cluster_of[i]] += r.col(static_cast<Index>(i));
    count[cluster_of[i]] += 1.0;
  }
  for (std::size_t c = 0; c < m; ++c) mu[c] /= count[c];
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += (r.col(static_cast<Index>(i)) - mu[cluster_of[i]]).squaredNorm();
  const double var = std::max(ss / static_cast<double>(n - 1), 1e-8);
  const double s = normalize ? 1.0 / (2.0 * var) : 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x = r.col(static_cast<Index>(i));
    const double num = std::exp(-s * (x - mu[cluster_of[i]]).squaredNorm() - alpha);
    double den = 0.0;
    for (std::size_t c = 0; c < m; ++c)
      if (cls[c] != cls[cluster_of[i]]) den += std::exp(-s * (x - mu[c]).squaredNorm());
    total += std::max(0.0, -std::log(num / den));
  }
  return total / static_cast<double>(n);
}

double nca_oracle(const Eigen::MatrixXd& r, const std::vector<int>& y, Index i) {
  double same = 0.0, all = 0.0;
  for (Index j = 0; j < r.cols(); ++j) {
    if (j == i) continue;
    const double k = std::exp(-(r.col(i) - r.col(j)).squaredNorm());
    all += k;
    if (y[j] == y[i]) same += k;
  }
  return -std::log(same / all);
}

template <typename F>
Eigen::MatrixXd numeric_gradient(const Eigen::MatrixXd& x, F f, double h = 1e-6) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  Eigen::MatrixXd p = x;
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) {
      p(i, j) = x(i, j) + h;
      const double up = f(p);
      p(i, j) = x(i, j) - h;
      const double down = f(p);
      p(i, j) = x(i, j);
      g(i, j) = (up - down) / (2 * h);
    }
  return g;
}

const BatchLayout kFour{{0, 1, 0, 1}, {0, 1}};

}  // namespace

TEST_SUITE("magnet loss") {
  TEST_CASE("four point hand example") {
    const auto r = row({0.0, 1.0, 2.0, 3.0});
    const auto loss = magnet_minibatch_loss(r, kFour, {2.0, true});
    CHECK(loss.variance == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
    CHECK(loss.losses(0) == doctest::Approx(0.875).epsilon(1e-12));
    CHECK(loss.losses(1) == doctest::Approx(2.375).epsilon(1e-12));
    CHECK(loss.losses(2) == doctest::Approx(2.375).epsilon(1e-12));
    CHECK(loss.losses(3) == doctest::Approx(0.875).epsilon(1e-12));
    CHECK(std::abs(loss.mean_loss - 1.625) < 1e-9);
  }

  TEST_CASE("matches a scalar re-evaluation") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      std::mt19937_64 rng(s);
      const auto r = testing::gaussian(3, 12, rng);
      const BatchLayout layout{{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3}, {0, 1, 1, 2}};
      for (bool norm : {true, false}) {
        const auto loss = magnet_minibatch_loss(r, layout, {1.0, norm});
        CHECK(loss.mean_loss == doctest::Approx(magnet_oracle(r, layout.cluster_of, layout.cluster_class, 1.0, norm))
                                    .epsilon(1e-12));
      }
    }
  }

  TEST_CASE("satisfied margin gives zero loss and zero gradient") {
    const auto r = row({0.0, 0.01, 100.0, 100.01});
    const BatchLayout layout{{0, 0, 1, 1}, {0, 1}};
    const auto loss = magnet_minibatch_loss(r, layout, {0.0, true});
    CHECK(loss.mean_loss == 0.0);
    CHECK(loss.gradients.isZero(0.0));
  }

  TEST_CASE("standardized loss is invariant to scaling") {
    std::mt19937_64 rng(3);
    const auto r = testing::gaussian(4, 8, rng);
    const BatchLayout layout{{0, 0, 1, 1, 2, 2, 3, 3}, {0, 1, 0, 1}};
    const double base = magnet_minibatch_loss(r, layout, {}).mean_loss;
    for (double t : {0.5, 2.0, 10.0}) CHECK(std::abs(magnet_minibatch_loss(Eigen::MatrixXd(t * r), layout, {}).mean_loss - base) < 1e-9);
  }

  TEST_CASE("loss is non-decreasing in the gap") {
    std::mt19937_64 rng(4);
    const auto r = testing::gaussian(2, 8, rng);
    const BatchLayout layout{{0, 0, 1, 1, 2, 2, 3, 3}, {0, 1, 1, 0}};
    double last = -1.0;
    for (double a = 0.0; a <= 5.0; a += 0.25) {
      const double l = magnet_minibatch_loss(r, layout, {a, true}).mean_loss;
      CHECK(l >= last);
      last = l;
    }
  }

  TEST_CASE("permuting the batch leaves the loss unchanged") {
    std::mt19937_64 rng(5);
    const auto r = testing::gaussian(3, 6, rng);
    const BatchLayout layout{{0, 0, 1, 1, 2, 2}, {0, 1, 2}};
    const std::vector<int> perm{5, 2, 0, 3, 1, 4};
    Eigen::MatrixXd rp(3, 6);
    BatchLayout lp{{}, layout.cluster_class};
    for (int j = 0; j < 6; ++j) {
      rp.col(j) = r.col(perm[j]);
      lp.cluster_of.push_back(layout.cluster_of[perm[j]]);
    }
    CHECK(magnet_minibatch_loss(rp, lp, {}).mean_loss ==
          doctest::Approx(magnet_minibatch_loss(r, layout, {}).mean_loss).epsilon(1e-13));
  }

  TEST_CASE("representation gradient matches finite differences") {
    std::mt19937_64 rng(6);
    const auto r = testing::gaussian(3, 9, rng);
    const BatchLayout layout{{0, 0, 0, 1, 1, 1, 2, 2, 2}, {0, 1, 1}};
    for (bool norm : {true, false}) {
      const auto loss = magnet_minibatch_loss(r, layout, {1.0, norm});
      const auto num =
          numeric_gradient(r, [&](const Eigen::MatrixXd& x) { return magnet_minibatch_loss(x, layout, {1.0, norm}).mean_loss; });
      CHECK((loss.gradients - num).cwiseAbs().maxCoeff() < 1e-7);
    }
  }

  TEST_CASE("a single class batch is rejected") {
    CHECK_THROWS(magnet_minibatch_loss(row({0.0, 1.0}), BatchLayout{{0, 0}, {0}}, {}));
  }

  TEST_CASE("float instantiation agrees with double") {
    const auto r = row({0.0, 1.0, 2.0, 3.0});
    const auto lf = magnet_minibatch_loss(Eigen::MatrixXf(r.cast<float>()), kFour, {2.0, true});
    CHECK(lf.mean_loss == doctest::Approx(1.625f).epsilon(1e-5));
  }
}

TEST_SUITE("magnet objective") {
  TEST_CASE("well separated point classes give zero") {
    const auto r = row({0.0, 10.0});
    const double v = magnet_objective(r, {0, 1}, r, {0, 1}, {0, 1}, 0.01, {1.0, true});
    CHECK(v == 0.0);
  }

  TEST_CASE("full form equals the minibatch form on the whole dataset") {
    const auto r = row({0.0, 1.0, 2.0, 3.0});
    const auto idx = build_index_from_representations(r, {0, 1, 0, 1}, 2, {1}, 0);
    const double full = magnet_full_objective(idx, r, {0, 1, 0, 1}, {2.0, true});
    CHECK(std::abs(full - 1.625) < 1e-9);
  }

  TEST_CASE("loss grows with unit slope in the gap once hinges are active") {
    const auto r = row({0.0, 1.0, 2.0, 3.0});
    const auto idx = build_index_from_representations(r, {0, 1, 0, 1}, 2, {1}, 0);
    const double a = magnet_full_objective(idx, r, {0, 1, 0, 1}, {10.0, true});
    const double b = magnet_full_objective(idx, r, {0, 1, 0, 1}, {13.0, true});
    CHECK(b - a == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_SUITE("triplet loss") {
  TEST_CASE("satisfied margin") {
    const auto l = triplet_loss(row({0.0}), row({1.0}), row({3.0}), 1.0);
    CHECK(l.mean_loss == 0.0);
  }

  TEST_CASE("hand evaluated violation") {
    const auto l = triplet_loss(row({0.0}), row({2.0}), row({1.0}), 0.5);
    CHECK(l.mean_loss == doctest::Approx(3.5));
  }

  TEST_CASE("boundary has zero subgradient") {
    const auto l = triplet_loss(row({0.0}), row({1.0}), row({1.0}), 0.0);
    CHECK(l.mean_loss == 0.0);
    CHECK(l.grad_anchor.isZero(0.0));
    CHECK(l.grad_positive.isZero(0.0));
    CHECK(l.grad_negative.isZero(0.0));
  }

  TEST_CASE("gradients match finite differences with and without normalization") {
    std::mt19937_64 rng(7);
    const auto a = testing::gaussian(4, 6, rng), p = testing::gaussian(4, 6, rng), n = testing::gaussian(4, 6, rng);
    for (bool norm : {false, true}) {
      const auto l = triplet_loss(a, p, n, 0.7, norm);
      const auto ga = numeric_gradient(a, [&](const Eigen::MatrixXd& x) { return triplet_loss(x, p, n, 0.7, norm).mean_loss; });
      const auto gn = numeric_gradient(n, [&](const Eigen::MatrixXd& x) { return triplet_loss(a, p, x, 0.7, norm).mean_loss; });
      CHECK((l.grad_anchor - ga).cwiseAbs().maxCoeff() < 1e-7);
      CHECK((l.grad_negative - gn).cwiseAbs().maxCoeff() < 1e-7);
    }
  }

  TEST_CASE("non-decreasing in the margin") {
    std::mt19937_64 rng(8);
    const auto a = testing::gaussian(2, 10, rng), p = testing::gaussian(2, 10, rng), n = testing::gaussian(2, 10, rng);
    double last = -1.0;
    for (double m = 0.0; m < 4.0; m += 0.5) {
      const double l = triplet_loss(a, p, n, m).mean_loss;
      CHECK(l >= last);
      last = l;
    }
  }
}

TEST_SUITE("magnet as triplet") {
  TEST_CASE("equals the symmetrized triplet pair") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> alpha(0.0, 2.0);
    for (Index dim : {1, 8})
      for (int t = 0; t < 100; ++t) {
        const Eigen::VectorXd a = testing::gaussian(dim, 1, rng), b = testing::gaussian(dim, 1, rng),
                              n = testing::gaussian(dim, 1, rng);
        const double al = alpha(rng);
        const double expected = std::max(0.0, (a - b).squaredNorm() - (a - n).squaredNorm() + al) +
                                std::max(0.0, (b - a).squaredNorm() - (b - n).squaredNorm() + al);
        CHECK(std::abs(magnet_as_triplet(a, b, n, al) - expected) < 1e-10);
      }
  }

  TEST_CASE("coincident pair") {
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 1.0), n = Eigen::VectorXd::Constant(1, 1.5);
    CHECK(magnet_as_triplet(a, a, n, 1.0) == doctest::Approx(2 * (1.0 - 0.25)));
  }

  TEST_CASE("distant impostor") {
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 0.0), b = Eigen::VectorXd::Constant(1, 1.0),
                          n = Eigen::VectorXd::Constant(1, 1e6);
    CHECK(magnet_as_triplet(a, b, n, 1.0) == 0.0);
  }
}

TEST_SUITE("nca loss") {
  TEST_CASE("two same-class points") {
    const auto l = nca_loss(row({0.0, 5.0}), {0, 0});
    CHECK(l.mean_loss == 0.0);
  }

  TEST_CASE("hand evaluated three points") {
    const auto r = row({0.0, 1.0, 5.0});
    const auto l = nca_loss(r, {0, 0, 1});
    CHECK(l.losses(0) == doctest::Approx(-std::log(std::exp(-1.0) / (std::exp(-1.0) + std::exp(-25.0)))));
    CHECK(l.losses(0) == doctest::Approx(2.5e-11).epsilon(0.05));
    CHECK(l.skipped == 1);
  }

  TEST_CASE("no peers anywhere gives an undefined mean") {
    const auto l = nca_loss(row({0.0, 1.0}), {0, 1});
    CHECK(l.skipped == 2);
    CHECK(std::isnan(l.mean_loss));
  }

  TEST_CASE("matches oracle and finite differences") {
    std::mt19937_64 rng(10);
    const auto r = testing::gaussian(3, 9, rng);
    const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2};
    const auto l = nca_loss(r, y);
    double mean = 0.0;
    for (Index i = 0; i < 9; ++i) {
      CHECK(l.losses(i) == doctest::Approx(nca_oracle(r, y, i)).epsilon(1e-12));
      mean += nca_oracle(r, y, i) / 9.0;
    }
    CHECK(l.mean_loss == doctest::Approx(mean).epsilon(1e-12));
    const auto num = numeric_gradient(r, [&](const Eigen::MatrixXd& x) { return nca_loss(x, y).mean_loss; });
    CHECK((l.gradients - num).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_SUITE("ncm loss") {
  NcmModel identity_model(std::vector<Eigen::MatrixXd> centroids) {
    return {Eigen::MatrixXd::Identity(1, 1), std::move(centroids)};
  }

  TEST_CASE("equidistant point") {
    const auto m = identity_model({row({0.0}), row({4.0})});
    const auto l = ncm_loss(m, row({2.0}), {0}, NcmMode::single_mean);
    CHECK(l.mean_loss == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("point on its class mean") {
    const auto m = identity_model({row({0.0}), row({4.0})});
    const auto l = ncm_loss(m, row({0.0}), {0}, NcmMode::single_mean);
    CHECK(l.mean_loss == doctest::Approx(std::log1p(std::exp(-16.0))).epsilon(1e-9));
    CHECK(l.mean_loss == doctest::Approx(1.1e-7).epsilon(0.05));
  }

  TEST_CASE("collapsed map gives log C") {
    NcmModel m{Eigen::MatrixXd::Zero(2, 1), {row({0.0}), row({1.0}), row({3.0})}};
    const auto l = ncm_loss(m, row({0.5, 2.0}), {0, 2}, NcmMode::single_mean);
    CHECK(l.losses(0) == doctest::Approx(std::log(3.0)));
    CHECK(l.losses(1) == doctest::Approx(std::log(3.0)));
  }

  TEST_CASE("multi-centroid scores by the nearest centroid") {
    const auto m = identity_model({row({-10.0, 0.0}), row({4.0})});
    const auto multi = ncm_loss(m, row({2.0}), {0}, NcmMode::multi_centroid);
    CHECK(multi.mean_loss == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("transform gradient matches finite differences") {
    std::mt19937_64 rng(11);
    const auto x = testing::gaussian(4, 7, rng);
    std::vector<Eigen::MatrixXd> cents{testing::gaussian(4, 2, rng), testing::gaussian(4, 2, rng),
                                       testing::gaussian(4, 2, rng)};
    const std::vector<int> y{0, 1, 2, 0, 1, 2, 0};
    for (auto mode : {NcmMode::single_mean, NcmMode::multi_centroid}) {
      NcmModel m{testing::gaussian(3, 4, rng), cents};
      if (mode == NcmMode::single_mean)
        for (auto& c : m.centroids) c = c.leftCols(1).eval();
      const auto l = ncm_loss(m, x, y, mode);
      const auto num = numeric_gradient(m.transform, [&](const Eigen::MatrixXd& w) {
        NcmModel mm{w, m.centroids};
        return ncm_loss(mm, x, y, mode).mean_loss;
      });
      CHECK((l.grad_transform - num).cwiseAbs().maxCoeff() < 1e-7);
    }
  }

  TEST_CASE("embedded form agrees with the linear form") {
    std::mt19937_64 rng(12);
    const auto x = testing::gaussian(4, 9, rng);
    const Eigen::MatrixXd w = testing::gaussian(3, 4, rng);
    std::vector<Eigen::MatrixXd> cents{testing::gaussian(4, 2, rng), testing::gaussian(4, 2, rng)};
    const std::vector<int> y{0, 1, 0, 1, 0, 1, 0, 1, 1};
    std::vector<int> classes;
    const auto projected = projected_centroids(NcmModel{w, cents}, classes);
    const auto linear = ncm_loss(NcmModel{w, cents}, x, y, NcmMode::multi_centroid);
    const auto embedded = ncm_representation_loss(w * x, projected, classes, 2, y);
    CHECK(embedded.mean_loss == doctest::Approx(linear.mean_loss).epsilon(1e-12));
    CHECK(embedded.switch_margins.size() == 18);
    // chain rule back to W recovers the linear gradient
    const Eigen::MatrixXd via_reps = embedded.grad_representations * x.transpose();
    Eigen::MatrixXd via_cents = Eigen::MatrixXd::Zero(3, 4);
    Index col = 0;
    for (const auto& c : cents)
      for (Index k = 0; k < c.cols(); ++k) via_cents += embedded.grad_centroids.col(col++) * c.col(k).transpose();
    CHECK((via_reps + via_cents - linear.grad_transform).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("embedded gradients match finite differences") {
    std::mt19937_64 rng(13);
    const auto r = testing::gaussian(3, 6, rng);
    const auto c = testing::gaussian(3, 5, rng);
    const std::vector<int> classes{0, 0, 1, 2, 2}, y{0, 1, 2, 2, 1, 0};
    const auto l = ncm_representation_loss(r, c, classes, 3, y);
    const auto num_r = numeric_gradient(r, [&](const Eigen::MatrixXd& v) {
      return ncm_representation_loss(v, c, classes, 3, y).mean_loss;
    });
    const auto num_c = numeric_gradient(c, [&](const Eigen::MatrixXd& v) {
      return ncm_representation_loss(r, v, classes, 3, y).mean_loss;
    });
    CHECK((l.grad_representations - num_r).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((l.grad_centroids - num_c).cwiseAbs().maxCoeff() < 1e-7);
    CHECK_THROWS_AS(ncm_representation_loss(r, c, {0, 0, 0, 2, 2}, 3, y), ContractError);
  }

  TEST_CASE("class centroids from data") {
    Dataset d;
    d.inputs = row({0.0, 2.0, 10.0, 11.0, 20.0, 21.0});
    d.labels = {0, 0, 1, 1, 1, 1};
    d.class_count = 2;
    const auto single = fit_class_centroids(d, NcmMode::single_mean, 1, 0);
    CHECK(single[0](0, 0) == doctest::Approx(1.0));
    CHECK(single[1](0, 0) == doctest::Approx(15.5));
    const auto multi = fit_class_centroids(d, NcmMode::multi_centroid, 2, 0);
    CHECK(multi[1].cols() == 2);
    CHECK(multi[0].cols() == 2);
  }
}

TEST_SUITE("cross entropy") {
  TEST_CASE("equal logits give log C") {
    const auto l = cross_entropy(Eigen::MatrixXd::Zero(4, 3), {0, 1, 3});
    CHECK(l.mean_loss == doctest::Approx(std::log(4.0)));
  }

  TEST_CASE("dominant true logit drives the loss to zero") {
    Eigen::MatrixXd z(2, 1);
    z << 800.0, 0.0;
    CHECK(cross_entropy(z, {0}).mean_loss < 1e-300);
  }

  TEST_CASE("hand evaluated two classes") {
    Eigen::MatrixXd z(2, 1);
    z << 1.0, 0.0;
    CHECK(cross_entropy(z, {0}).mean_loss == doctest::Approx(std::log1p(std::exp(-1.0))));
    CHECK(cross_entropy(z, {0}).mean_loss == doctest::Approx(0.3133).epsilon(1e-4));
  }

  TEST_CASE("softmax head gradients match finite differences") {
    std::mt19937_64 rng(12);
    const Mlp head = make_mlp({3, 4}, 2);
    const auto r = testing::gaussian(3, 5, rng);
    const std::vector<int> y{0, 3, 1, 2, 3};
    const auto l = softmax_xent(head, r, y);
    const auto num = numeric_gradient(r, [&](const Eigen::MatrixXd& x) { return softmax_xent(head, x, y).mean_loss; });
    CHECK((l.representation_gradients - num).cwiseAbs().maxCoeff() < 1e-7);
  }
}
