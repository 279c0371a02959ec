#include "helpers.hpp"

#include "magnet/sampler.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace magnet;

namespace {

Eigen::MatrixXd row(const std::vector<double>& values) {
  Eigen::MatrixXd m(1, static_cast<Index>(values.size()));
  for (std::size_t j = 0; j < values.size(); ++j) m(0, static_cast<Index>(j)) = values[j];
  return m;
}

// one cluster per class; class c holds `sizes[c]` points near 10 * c
ClusterIndex point_classes(const std::vector<int>& sizes) {
  std::vector<double> v;
  std::vector<int> labels;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    for (int i = 0; i < sizes[c]; ++i) {
      v.push_back(10.0 * static_cast<double>(c) + 0.01 * i);
      labels.push_back(static_cast<int>(c));
    }
  return build_index_from_representations(row(v), labels, static_cast<int>(sizes.size()), {1}, 0);
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("equal losses give a uniform seed distribution") {
    auto idx = point_classes({3, 3, 3, 3});
    for (int e = 0; e < 12; ++e) idx.update_loss_cache({{e, 0.7}});
    const auto p = seed_distribution(idx);
    for (Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(0.25));
  }

  TEST_CASE("seed probability is proportional to cluster loss") {
    auto idx = point_classes({2, 2});
    idx.update_loss_cache({{0, 1.0}, {1, 1.0}, {2, 3.0}, {3, 3.0}});
    const auto p = seed_distribution(idx);
    CHECK(p(0) == doctest::Approx(0.25));
    CHECK(p(1) == doctest::Approx(0.75));
  }

  TEST_CASE("a zero-loss cluster is never a seed") {
    auto idx = point_classes({2, 2});
    idx.update_loss_cache({{0, 0.0}, {1, 0.0}, {2, 2.0}, {3, 2.0}});
    const auto p = seed_distribution(idx);
    CHECK(p(0) == 0.0);
    CHECK(p(1) == 1.0);
  }

  TEST_CASE("all zero losses fall back to uniform") {
    auto idx = point_classes({2, 2});
    idx.update_loss_cache({{0, 0.0}, {1, 0.0}, {2, 0.0}, {3, 0.0}});
    const auto p = seed_distribution(idx);
    CHECK(p(0) == doctest::Approx(0.5));
  }

  TEST_CASE("two clusters, M=2, D=2") {
    const auto idx = point_classes({4, 5});
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
      const auto nb = sample_neighbourhood(idx, 2, 2, rng);
      CHECK(nb.clusters.size() == 2);
      CHECK(std::set<int>(nb.clusters.begin(), nb.clusters.end()).size() == 2);
      CHECK(nb.examples.size() == 4);
      CHECK(nb.examples[0] != nb.examples[1]);
      CHECK(nb.examples[2] != nb.examples[3]);
      CHECK_FALSE(nb.with_replacement);
    }
  }

  TEST_CASE("small clusters are sampled with replacement") {
    const auto idx = point_classes({3, 3});
    std::mt19937_64 rng(2);
    const auto nb = sample_neighbourhood(idx, 2, 4, rng);
    CHECK(nb.examples.size() == 8);
    CHECK(nb.with_replacement);
  }

  TEST_CASE("twelve clusters of four") {
    const auto idx = point_classes(std::vector<int>(13, 5));
    std::mt19937_64 rng(3);
    const auto nb = sample_neighbourhood(idx, 12, 4, rng);
    CHECK(nb.clusters.size() == 12);
    CHECK(nb.examples.size() == 48);
    CHECK_FALSE(nb.truncated);
  }

  TEST_CASE("neighbourhood invariants hold on random indexes") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
      const auto reps = testing::gaussian(2, 60, rng);
      std::vector<int> labels;
      for (int i = 0; i < 60; ++i) labels.push_back(i % 4);
      const auto idx = build_index_from_representations(reps, labels, 4, {3}, static_cast<std::uint64_t>(t));
      const auto nb = sample_neighbourhood(idx, 5, 3, rng);
      REQUIRE(nb.examples.size() == nb.clusters.size() * 3);
      const int seed_class = idx.cluster_class(nb.clusters[0]);
      for (std::size_t k = 1; k < nb.clusters.size(); ++k) CHECK(idx.cluster_class(nb.clusters[k]) != seed_class);
      for (std::size_t i = 0; i < nb.examples.size(); ++i)
        CHECK(idx.assignment(nb.examples[i]) == nb.clusters[nb.position_of[i]]);
    }
  }

  TEST_CASE("a single class index cannot form a neighbourhood") {
    const auto idx = point_classes({4});
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(sample_neighbourhood(idx, 2, 2, rng), ConfigError);
  }

  TEST_CASE("seed frequencies follow the distribution") {
    auto idx = point_classes({2, 2, 2, 2});
    idx.update_loss_cache({{0, 1.0}, {1, 1.0}, {2, 2.0}, {3, 2.0}, {4, 3.0}, {5, 3.0}, {6, 4.0}, {7, 4.0}});
    const auto p = seed_distribution(idx);
    std::mt19937_64 rng(6);
    const int draws = 100000;
    std::vector<int> hits(4, 0);
    for (int t = 0; t < draws; ++t) ++hits[sample_neighbourhood(idx, 2, 1, rng).clusters[0]];
    for (int c = 0; c < 4; ++c) {
      const double se = std::sqrt(p(c) * (1 - p(c)) / draws);
      CHECK(std::abs(hits[c] / static_cast<double>(draws) - p(c)) < 3 * se);
    }
  }

  TEST_CASE("a fixed rng seed fixes the sample sequence") {
    const auto idx = point_classes({5, 5, 5});
    std::mt19937_64 a(7), b(7);
    for (int t = 0; t < 20; ++t) {
      const auto x = sample_neighbourhood(idx, 3, 2, a), y = sample_neighbourhood(idx, 3, 2, b);
      CHECK(x.examples == y.examples);
      CHECK(x.clusters == y.clusters);
    }
  }

  TEST_CASE("full fraction draws negatives uniformly") {
    const auto reps = row({0.0, 0.1, 1.0, 2.0, 3.0, 4.0});
    const std::vector<int> labels{0, 0, 1, 1, 1, 1};
    std::mt19937_64 rng(8);
    std::vector<int> hits(6, 0);
    const int draws = 40000;
    for (const auto& t : sample_triplets(reps, labels, draws, 1.0, rng))
      if (labels[t.anchor] == 0) ++hits[t.negative];
    int total = hits[2] + hits[3] + hits[4] + hits[5];
    for (int i = 2; i < 6; ++i) CHECK(std::abs(hits[i] / static_cast<double>(total) - 0.25) < 0.02);
  }

  TEST_CASE("half fraction with two per class picks the nearest negative") {
    const auto reps = row({0.0, 1.0, 2.5, 10.0});
    const std::vector<int> labels{0, 0, 1, 1};
    std::mt19937_64 rng(9);
    for (const auto& t : sample_triplets(reps, labels, 200, 0.5, rng)) {
      if (labels[t.anchor] == 0) CHECK(t.negative == 2);
      if (t.anchor == 3) CHECK(t.negative == 1);
      CHECK(t.positive != t.anchor);
      CHECK(labels[t.positive] == labels[t.anchor]);
    }
  }
}
