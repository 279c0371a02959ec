#pragma once

#include "magnet/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace magnet {

enum class Objective { magnet, triplet, nca, ncm, ncmc, softmax };

std::string to_string(Objective objective);
Objective parse_objective(const std::string& name);

/// Where the examples come from: a generator preset, a mixture spec file, or
/// CSV files. Without an explicit test file the data is split.
struct DataSource {
  std::string generator;  // interleaved | hierarchy | attributes
  std::string spec_path;  // JSON mixture spec
  std::string train_path, train_attributes;
  std::string test_path, test_attributes;
  int points_per_class = 0;  // generator override; 0 keeps the preset's
  double stddev = 0.0;       // generator override; 0 keeps the preset's
  double test_fraction = 0.2;
  std::string collapse = "none";  // none | random

  bool operator==(const DataSource&) const = default;
};

struct MagnetSettings {
  double alpha = 1.0;
  std::vector<int> k = {2};  // one entry = uniform across classes
  int m = 12;
  int d = 4;
  long refresh_interval = 0;  // 0 = one epoch
  bool variance_normalization = true;
};

struct TripletSettings {
  double alpha = 0.5;
  double impostor_fraction = 1.0;
  int batch = 16;  // triplets per iteration
  bool normalize = false;
  long refresh_interval = 0;  // 0 = one epoch
};

struct EvalSettings {
  int neighbours = 128;      // L for kNC
  int knn_neighbours = 128;  // L for soft kNN
  double sigma_decay = 0.99;
  std::vector<int> attribute_sizes = {5, 10, 20};
};

struct ExperimentConfig {
  std::string name;
  Objective objective = Objective::magnet;
  std::uint64_t seed = 0;
  long iterations = 1000;
  long eval_interval = 100;
  DataSource data;
  std::vector<int> layer_dims;  // empty = {input, 64, 64}
  OptimizerConfig optimizer;
  bool epoch_length_set = false;
  MagnetSettings magnet;
  TripletSettings triplet;
  int batch_size = 48;  // nca, ncm, ncmc, softmax
  int batch_cap = 48;   // upper bound on M * D
  int ncmc_k = 2;
  int pretrain_epochs = 0;  // softmax warm-up before the main objective
  EvalSettings eval;

  void validate() const;
};

/// Environment variable that overrides `seed` when set.
inline constexpr const char* kSeedEnvironmentVariable = "MAGNET_SEED";

/// Flat `key = value` text, `#` starts a comment. Relative paths are
/// resolved against `base_dir`. Unknown keys are errors, as are magnet.* keys
/// for a non-magnet objective and triplet.* keys for a non-triplet one.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path, bool apply_environment = true);

}  // namespace magnet
