#include "magnet/sampler.hpp"

#include <algorithm>
#include <numeric>

namespace magnet {

Eigen::VectorXd seed_distribution(const ClusterIndex& index) {
  const int n = index.cluster_count();
  if (n == 0) throw ContractError("seed distribution of an empty index");
  Eigen::VectorXd p(n);
  for (int c = 0; c < n; ++c) p(c) = index.members(c).empty() ? 0.0 : std::max(index.cluster_mean_loss(c), 0.0);
  double total = p.sum();
  if (!(total > 0.0)) {
    for (int c = 0; c < n; ++c) p(c) = index.members(c).empty() ? 0.0 : 1.0;
    total = p.sum();
  }
  return p / total;
}

namespace {

int draw(const Eigen::VectorXd& p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = -1;
  for (Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    acc += p(i);
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  return last;
}

}  // namespace

Neighbourhood sample_neighbourhood(const ClusterIndex& index, int m, int d, std::mt19937_64& rng) {
  if (m < 2 || d < 1) throw ConfigError("neighbourhood needs M >= 2 and D >= 1");
  int populated = 0;
  for (int c = 0; c < index.class_count(); ++c) {
    for (int k = 0; k < index.clusters_in_class(c); ++k)
      if (!index.members(index.flat_id(c, k)).empty()) {
        ++populated;
        break;
      }
  }
  if (populated < 2) throw ConfigError("no impostor cluster exists: the index holds a single class");

  Neighbourhood out;
  const int seed = draw(seed_distribution(index), rng);
  const auto impostors = nearest_impostor_clusters(index, seed, m - 1);
  out.truncated = impostors.truncated;
  out.clusters.push_back(seed);
  out.clusters.insert(out.clusters.end(), impostors.clusters.begin(), impostors.clusters.end());

  for (std::size_t pos = 0; pos < out.clusters.size(); ++pos) {
    const int cluster = out.clusters[pos];
    out.cluster_class.push_back(index.cluster_class(cluster));
    const auto& members = index.members(cluster);
    if (static_cast<int>(members.size()) >= d) {
      // Partial Fisher-Yates: d distinct members.
      std::vector<int> pool = members;
      for (int j = 0; j < d; ++j) {
        const auto pick = std::uniform_int_distribution<std::size_t>(j, pool.size() - 1)(rng);
        std::swap(pool[j], pool[pick]);
        out.examples.push_back(pool[j]);
      }
    } else {
      out.with_replacement = true;
      std::uniform_int_distribution<std::size_t> any(0, members.size() - 1);
      for (int j = 0; j < d; ++j) out.examples.push_back(members[any(rng)]);
    }
    out.position_of.insert(out.position_of.end(), static_cast<std::size_t>(d), static_cast<int>(pos));
  }
  return out;
}

std::vector<Triplet> sample_triplets(const Eigen::MatrixXd& reps, const std::vector<int>& labels, int count,
                                     double impostor_fraction, std::mt19937_64& rng) {
  const Index n = reps.cols();
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("labels do not match representations");
  if (!(impostor_fraction > 0.0 && impostor_fraction <= 1.0))
    throw ConfigError("impostor fraction must lie in (0, 1]");
  int class_count = 0;
  for (int y : labels) class_count = std::max(class_count, y + 1);
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(class_count));
  for (Index i = 0; i < n; ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  int populated = 0;
  for (const auto& members : by_class) populated += members.empty() ? 0 : 1;
  if (populated < 2) throw ConfigError("triplet sampling needs at least two classes");

  std::vector<int> anchors;
  for (Index i = 0; i < n; ++i)
    if (by_class[labels[i]].size() >= 2) anchors.push_back(static_cast<int>(i));
  if (anchors.empty()) throw ConfigError("no class has two examples to form a positive pair");

  std::vector<Triplet> out;
  std::vector<std::pair<double, int>> negatives;
  std::uniform_int_distribution<std::size_t> pick_anchor(0, anchors.size() - 1);
  for (int t = 0; t < count; ++t) {
    Triplet trip;
    trip.anchor = anchors[pick_anchor(rng)];
    const auto& same = by_class[labels[trip.anchor]];
    do {
      trip.positive = same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng)];
    } while (trip.positive == trip.anchor);

    negatives.clear();
    for (Index i = 0; i < n; ++i)
      if (labels[i] != labels[trip.anchor])
        negatives.emplace_back((reps.col(i) - reps.col(trip.anchor)).squaredNorm(), static_cast<int>(i));
    auto keep = static_cast<std::size_t>(std::ceil(impostor_fraction * static_cast<double>(negatives.size())));
    keep = std::clamp<std::size_t>(keep, 1, negatives.size());
    if (keep < negatives.size())
      std::nth_element(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(keep - 1), negatives.end());
    // Sort the kept prefix so the draw does not depend on nth_element's layout.
    std::sort(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(keep));
    trip.negative = negatives[std::uniform_int_distribution<std::size_t>(0, keep - 1)(rng)].second;
    out.push_back(trip);
  }
  return out;
}

}  // namespace magnet
