#pragma once

#include "magnet/checkpoint.hpp"
#include "magnet/config.hpp"
#include "magnet/data.hpp"
#include "magnet/eval.hpp"
#include "magnet/gradcheck.hpp"
#include "magnet/index.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace magnet {

struct ExperimentData {
  Dataset train;
  Dataset test;
  /// Original labels when the training labels were collapsed into pairs.
  std::optional<std::vector<int>> train_fine, test_fine;
};

/// Generates or loads the data, splits it and applies the label collapse.
ExperimentData prepare_data(const ExperimentConfig& config);

struct MetricsRow {
  long iter = 0;
  double train_loss = 0.0;
  std::optional<double> val_error;
};

/// `iter,train_loss,val_error`; val_error is empty between evaluations.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Raised when a training loss is not finite; `dump` holds the batch as JSON.
struct NonFiniteLoss : std::runtime_error {
  NonFiniteLoss(const std::string& what, std::string dump) : std::runtime_error(what), dump(std::move(dump)) {}
  std::string dump;
};

struct TrainResult {
  Checkpoint state;                  // final state, evaluation context included
  std::optional<ClusterIndex> index;  // magnet: the last refreshed index
  std::vector<MetricsRow> log;
  EvalReport report;                 // on the held-out split
};

/// Iterations per epoch and between index refreshes, resolved from defaults.
long resolved_epoch_length(const ExperimentConfig& config, const ExperimentData& data);
long resolved_refresh_interval(const ExperimentConfig& config, const ExperimentData& data);

/// Receives the training state at every index-refresh boundary after the start.
using CheckpointSink = std::function<void(const Checkpoint&)>;

/// Runs the objective's training loop. With `resume`, continues from that
/// state; it must sit on an index-refresh boundary.
TrainResult train(const ExperimentConfig& config, const ExperimentData& data, const Checkpoint* resume = nullptr,
                  const CheckpointSink& on_refresh = {});

/// Context the objective's classifier uses: kNC over fresh per-class
/// clusters (magnet), soft kNN over training examples (triplet, nca), the
/// nearest projected centroid (ncm, ncmc). Absent for softmax.
std::optional<EvalContext> make_eval_context(const ExperimentConfig& config, const Checkpoint& state,
                                             const Dataset& train, long iteration);

std::vector<int> predict(const Checkpoint& state, const Eigen::MatrixXd& inputs);

EvalReport evaluate(const Checkpoint& state, const Dataset& data,
                    const std::vector<int>& attribute_sizes = {5, 10, 20});

/// Writes metrics.csv, report.json, checkpoint.bin and, for magnet, index.json.
/// checkpoint_refresh.bin holds the latest refresh-boundary state while training.
TrainResult run_train(const ExperimentConfig& config, const std::string& outdir,
                      const std::optional<std::string>& resume_path = std::nullopt);

EvalReport run_eval(const std::string& checkpoint_path, const std::string& dataset_path,
                    const std::optional<std::string>& attributes_path, const std::string& outdir);

struct BenchRow {
  std::string name;
  Objective objective = Objective::magnet;
  std::optional<long> iterations_to_target;
  double asymptotic_error = 0.0;
  std::optional<double> ratio;  // iterations_to_target / first row's
  std::vector<MetricsRow> log;
};

struct BenchResult {
  double target = 0.0;
  std::vector<BenchRow> rows;
};

/// Iterations completed when val_error first reached `target`.
std::optional<long> iterations_to_target(const std::vector<MetricsRow>& log, double target);
/// Mean val_error over the final quarter of evaluations.
double asymptotic_error(const std::vector<MetricsRow>& log);

/// Runs every config on the same data. The target is `target` or, when
/// `target_from` is given, that row's asymptotic error.
BenchResult bench(const std::vector<ExperimentConfig>& configs, std::optional<double> target,
                  std::optional<std::size_t> target_from = std::nullopt);
std::string bench_table(const BenchResult& result);

struct GradCheckRow {
  Objective objective;
  GradCheckReport report;
};

/// Gradient check of every objective on a tiny random problem through the
/// config's architecture (10 -> 16 -> 8 when none is given). NCM and NCMC
/// embed their centroids with the same network. With `inject_fault` the
/// first weight gradient is doubled.
std::vector<GradCheckRow> grad_check_objectives(const ExperimentConfig& config, bool inject_fault = false,
                                                double tolerance = 1e-4);

}  // namespace magnet
