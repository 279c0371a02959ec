#include "magnet/index.hpp"

#include "magnet/kmeans.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>

namespace magnet {

void ClusterIndex::set_loss_cache(std::vector<std::optional<double>> cache) {
  if (static_cast<Index>(cache.size()) != example_count())
    throw ContractError("loss cache size does not match indexed examples");
  loss_cache_ = std::move(cache);
}

std::optional<double> ClusterIndex::global_mean_loss() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : loss_cache_)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double ClusterIndex::cluster_mean_loss(int cluster) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (int e : members_[cluster])
    if (loss_cache_[e]) {
      sum += *loss_cache_[e];
      ++n;
    }
  if (n > 0) return sum / static_cast<double>(n);
  return global_mean_loss().value_or(1.0);
}

void ClusterIndex::update_loss_cache(const std::vector<std::pair<int, double>>& example_losses) {
  for (const auto& [example, loss] : example_losses) {
    if (example < 0 || example >= example_count()) throw ContractError("loss cache: example out of range");
    loss_cache_[example] = loss;
  }
}

std::string ClusterIndex::to_json() const {
  nlohmann::json doc;
  doc["variance"] = variance_;
  doc["built_at_iteration"] = built_at_;
  doc["classes"] = nlohmann::json::array();
  for (int c = 0; c < class_count(); ++c) {
    nlohmann::json centers = nlohmann::json::array();
    for (int k = 0; k < clusters_in_class(c); ++k) {
      const auto col = centers_.col(flat_id(c, k));
      centers.push_back(std::vector<double>(col.data(), col.data() + col.size()));
    }
    doc["classes"].push_back({{"class", c}, {"centers", centers}});
  }
  nlohmann::json assignments = nlohmann::json::array();
  for (int a : assignment_) {
    const auto [c, k] = cluster_key(a);
    assignments.push_back({c, k});
  }
  doc["assignments"] = assignments;
  return doc.dump(2);
}

std::vector<int> expand_cluster_counts(const std::vector<int>& k, int class_count) {
  if (k.size() == 1) return std::vector<int>(static_cast<std::size_t>(class_count), k.front());
  if (static_cast<int>(k.size()) != class_count)
    throw ConfigError("per-class K list has " + std::to_string(k.size()) + " entries for " +
                      std::to_string(class_count) + " classes");
  return k;
}

ClusterIndex build_index_from_representations(const Eigen::MatrixXd& representations,
                                              const std::vector<int>& labels, int class_count,
                                              const std::vector<int>& k, std::uint64_t seed, long iteration,
                                              const ClusterIndex* previous) {
  const Index n = representations.cols();
  if (n < 1) throw ContractError("cannot index an empty dataset");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("labels do not match representations");
  const auto ks = expand_cluster_counts(k, class_count);

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(class_count));
  for (Index i = 0; i < n; ++i) by_class[labels[i]].push_back(static_cast<int>(i));

  ClusterIndex index;
  index.class_offsets_.assign(1, 0);
  for (int c = 0; c < class_count; ++c) {
    if (ks[c] < 1) throw ConfigError("K for class " + std::to_string(c) + " must be >= 1");
    if (ks[c] > static_cast<int>(by_class[c].size()))
      throw ConfigError("K=" + std::to_string(ks[c]) + " exceeds the " + std::to_string(by_class[c].size()) +
                        " examples of class " + std::to_string(c));
    index.class_offsets_.push_back(index.class_offsets_.back() + ks[c]);
    for (int j = 0; j < ks[c]; ++j) index.cluster_class_.push_back(c);
  }
  index.centers_.resize(representations.rows(), index.class_offsets_.back());
  index.members_.assign(static_cast<std::size_t>(index.class_offsets_.back()), {});
  index.assignment_.assign(static_cast<std::size_t>(n), -1);

  double sum_sq = 0.0;
  for (int c = 0; c < class_count; ++c) {
    const auto& idx = by_class[c];
    Eigen::MatrixXd points(representations.rows(), static_cast<Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) points.col(static_cast<Index>(j)) = representations.col(idx[j]);
    const auto km = kmeans(points, ks[c], derive_seed(seed, 0x1de7, static_cast<std::uint64_t>(c)));
    index.centers_.middleCols(index.class_offsets_[c], ks[c]) = km.centers;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const int flat = index.class_offsets_[c] + km.assignment[j];
      index.assignment_[idx[j]] = flat;
      index.members_[flat].push_back(idx[j]);
    }
    sum_sq += km.objective;
  }
  const double variance = n > 1 ? sum_sq / static_cast<double>(n - 1) : 0.0;
  index.variance_ = std::max(variance, kVarianceFloor);
  index.built_at_ = iteration;

  if (previous && previous->example_count() == n) {
    index.loss_cache_ = previous->loss_cache_;
  } else {
    index.loss_cache_.assign(static_cast<std::size_t>(n), std::nullopt);
  }
  return index;
}

ClusterIndex build_index(const Mlp& snapshot, const Dataset& data, const std::vector<int>& k, std::uint64_t seed,
                         long iteration, const ClusterIndex* previous) {
  if (data.size() < 1) throw ContractError("cannot index an empty dataset");
  return build_index_from_representations(embed(snapshot, data.inputs), data.labels, data.class_count, k, seed,
                                          iteration, previous);
}

ImpostorClusters nearest_impostor_clusters(const ClusterIndex& index, int seed_cluster, int count) {
  if (seed_cluster < 0 || seed_cluster >= index.cluster_count())
    throw ContractError("seed cluster not in index");
  const int seed_class = index.cluster_class(seed_cluster);
  const auto seed_center = index.centers().col(seed_cluster);
  std::vector<std::pair<double, int>> ranked;
  for (int c = 0; c < index.cluster_count(); ++c) {
    if (index.cluster_class(c) == seed_class || index.members(c).empty()) continue;
    ranked.emplace_back((index.centers().col(c) - seed_center).squaredNorm(), c);
  }
  std::sort(ranked.begin(), ranked.end());
  ImpostorClusters out;
  out.truncated = static_cast<int>(ranked.size()) < count;
  const auto take = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(std::max(count, 0)));
  for (std::size_t i = 0; i < take; ++i) out.clusters.push_back(ranked[i].second);
  return out;
}

}  // namespace magnet
