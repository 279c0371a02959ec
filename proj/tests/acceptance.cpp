// Acceptance suite: one PASS/FAIL line per criterion.
// usage: acceptance [criterion numbers...]   (none = all)

#include "magnet/eval.hpp"
#include "magnet/experiment.hpp"
#include "magnet/index.hpp"
#include "magnet/kmeans.hpp"
#include "magnet/losses.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace magnet;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr Index kGradMinCoordinates = 200;
constexpr double kGradSeconds = 30.0;
constexpr double kReductionTolerance = 1e-10;
constexpr double kFullVsStochasticTolerance = 1e-9;
constexpr double kHandLoss = 1.625;
constexpr double kHandTolerance = 1e-9;
constexpr int kKmeansInstances = 1000;
constexpr int kEquivalencePoints = 1000;
constexpr double kMagnetErrorCeiling = 0.05;
constexpr double kNcmErrorFloor = 0.25;
constexpr double kSeparationSeconds = 300.0;
constexpr long kSeparationIterations = 2000;
constexpr double kRatioFloor = 2.0;
constexpr double kFineChance = 0.875;
constexpr double kControlStandardErrors = 3.0;
constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

ExperimentConfig interleaved_config(Objective o) {
  ExperimentConfig c;
  c.name = to_string(o);
  c.objective = o;
  c.seed = kSeed;
  c.iterations = kSeparationIterations;
  c.eval_interval = 10;
  c.data.generator = "interleaved";
  c.layer_dims = (o == Objective::ncm || o == Objective::ncmc) ? std::vector<int>{2, 16} : std::vector<int>{2, 32, 16};
  c.magnet.alpha = 1.0;
  c.magnet.k = {2};
  c.magnet.m = 4;
  c.magnet.d = 4;
  c.batch_size = 16;
  // about the same number of examples per step as magnet's M * D = 16
  c.triplet.batch = 5;
  return c;
}

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c;
  c.seed = kSeed;
  c.layer_dims = {10, 16, 8};
  const auto rows = grad_check_objectives(c, false, kGradTolerance);
  const double elapsed = seconds_since(t0);
  bool ok = elapsed < kGradSeconds;
  std::string detail;
  for (const auto& r : rows) {
    ok = ok && r.report.passed && r.report.max_relative_error < kGradTolerance &&
         r.report.checked >= kGradMinCoordinates;
    detail += fmt("%s %.2e/%ld ", to_string(r.objective).c_str(), r.report.max_relative_error,
                  static_cast<long>(r.report.checked));
  }
  return {ok, detail + fmt("in %.1fs", elapsed)};
}

Outcome triplet_reduction() {
  std::mt19937_64 rng(kSeed);
  std::uniform_real_distribution<double> alpha(0.0, 2.0);
  double worst = 0.0;
  for (Index dim : {1, 8})
    for (int t = 0; t < 100; ++t) {
      const Eigen::VectorXd a = gaussian(dim, 1, rng), b = gaussian(dim, 1, rng), n = gaussian(dim, 1, rng);
      const double al = alpha(rng);
      const auto forward = triplet_loss(a, b, n, al);
      const auto backward = triplet_loss(b, a, n, al);
      const double expected = forward.losses(0) + backward.losses(0);
      worst = std::max(worst, std::abs(magnet_as_triplet(a, b, n, al) - expected));
    }
  return {worst < kReductionTolerance, fmt("max deviation %.2e over 200 triples", worst)};
}

Outcome full_vs_stochastic() {
  std::mt19937_64 rng(kSeed);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const int classes = 2 + t % 3;
    const int per_class = 4 + t % 9;
    const Index n = classes * per_class;  // at most 48
    std::vector<int> labels;
    for (Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % classes));
    const auto reps = gaussian(1 + t % 5, n, rng);
    const auto idx =
        build_index_from_representations(reps, labels, classes, {1 + t % 3}, static_cast<std::uint64_t>(t));
    BatchLayout layout;
    layout.cluster_of = idx.assignments();
    for (int k = 0; k < idx.cluster_count(); ++k) layout.cluster_class.push_back(idx.cluster_class(k));
    for (bool norm : {true, false}) {
      const MagnetConfig mc{0.5 + 0.1 * (t % 10), norm};
      const double full = magnet_full_objective(idx, reps, labels, mc);
      const double stochastic = magnet_minibatch_loss(reps, layout, mc).mean_loss;
      worst = std::max(worst, std::abs(full - stochastic));
    }
  }
  return {worst < kFullVsStochasticTolerance, fmt("max deviation %.2e over 400 evaluations", worst)};
}

Outcome hand_computed_loss() {
  Eigen::MatrixXd r(1, 4);
  r << 0.0, 1.0, 2.0, 3.0;
  const BatchLayout layout{{0, 1, 0, 1}, {0, 1}};
  const double loss = magnet_minibatch_loss(r, layout, {2.0, true}).mean_loss;
  return {std::abs(loss - kHandLoss) <= kHandTolerance, fmt("mean loss %.12f", loss)};
}

Outcome kmeans_properties() {
  bool ok = true;
  int violations = 0;
  for (int s = 0; s < kKmeansInstances; ++s) {
    std::mt19937_64 rng(derive_seed(kSeed, 0x4b, static_cast<std::uint64_t>(s)));
    const int n = 5 + s % 60;
    const auto pts = gaussian(1 + s % 5, n, rng);
    const auto r = kmeans(pts, 1 + s % std::min(n, 8), static_cast<std::uint64_t>(s));
    for (std::size_t i = 1; i < r.history.size(); ++i)
      if (r.history[i] > r.history[i - 1]) ++violations;
  }
  ok = ok && violations == 0;

  // brute force over all 2-partitions of the line instance
  Eigen::MatrixXd line(1, 4);
  line << 0.0, 0.1, 10.0, 10.1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_side;
  for (unsigned mask = 1; mask < 15; ++mask) {
    double total = 0.0;
    for (unsigned side = 0; side < 2; ++side) {
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < 4; ++i)
        if (((mask >> i) & 1u) == side) sum += line(0, i), ++count;
      for (int i = 0; i < 4; ++i)
        if (((mask >> i) & 1u) == side) total += std::pow(line(0, i) - sum / count, 2);
    }
    if (total < best) {
      best = total;
      best_side.assign({static_cast<int>(mask & 1u), static_cast<int>((mask >> 1) & 1u),
                        static_cast<int>((mask >> 2) & 1u), static_cast<int>((mask >> 3) & 1u)});
    }
  }
  const auto two = kmeans(line, 2, kSeed);
  bool same_partition = true;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      same_partition = same_partition && ((two.assignment[i] == two.assignment[j]) == (best_side[i] == best_side[j]));
  ok = ok && same_partition && std::abs(two.objective - best) < 1e-12;

  std::mt19937_64 rng(kSeed);
  const auto pts = gaussian(3, 50, rng);
  const auto one = kmeans(pts, 1, kSeed);
  const double mean_gap = (one.centers.col(0) - pts.rowwise().mean()).cwiseAbs().maxCoeff();
  ok = ok && mean_gap < 1e-12;
  return {ok, fmt("%d increases over %d instances, line partition %s, K=1 gap %.1e", violations, kKmeansInstances,
                  same_partition ? "optimal" : "suboptimal", mean_gap)};
}

Outcome knc_ncm_equivalence() {
  std::mt19937_64 rng(kSeed);
  const int classes = 5;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) labels.push_back(i % classes);
  Eigen::MatrixXd train = gaussian(4, 200, rng);
  for (int i = 0; i < 200; ++i) train(0, i) += 1.5 * labels[i];
  const auto idx = build_index_from_representations(train, labels, classes, {1}, kSeed);
  EvalContext ctx;
  ctx.points = idx.centers();
  for (int k = 0; k < idx.cluster_count(); ++k) ctx.classes.push_back(idx.cluster_class(k));
  ctx.class_count = classes;
  ctx.variance = idx.variance();
  ctx.neighbours = idx.cluster_count();
  const Eigen::MatrixXd test = 2.0 * gaussian(4, kEquivalencePoints, rng);
  int agree = 0;
  for (Index i = 0; i < test.cols(); ++i) {
    int nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
      int count = 0;
      for (int j = 0; j < 200; ++j)
        if (labels[j] == c) mean += train.col(j), ++count;
      const double d = (test.col(i) - mean / count).squaredNorm();
      if (d < best) best = d, nearest = c;
    }
    agree += knc_classify(ctx, test.col(i)).label == nearest;
  }
  return {agree == kEquivalencePoints, fmt("%d/%d decisions agree", agree, kEquivalencePoints)};
}

Outcome multimodal_separation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto magnet_cfg = interleaved_config(Objective::magnet);
  const auto data = prepare_data(magnet_cfg);
  const auto magnet_run = train(magnet_cfg, data);
  const auto ncm_run = train(interleaved_config(Objective::ncm), data);
  const double elapsed = seconds_since(t0);
  const double m = magnet_run.report.error_rate, n = ncm_run.report.error_rate;
  return {m <= kMagnetErrorCeiling && n > kNcmErrorFloor && elapsed < kSeparationSeconds,
          fmt("magnet %.4f (<= %.2f), ncm %.4f (> %.2f), %.1fs", m, kMagnetErrorCeiling, n, kNcmErrorFloor,
              elapsed)};
}

Outcome convergence_efficiency() {
  const auto result = bench({interleaved_config(Objective::magnet), interleaved_config(Objective::triplet)},
                            std::nullopt, 1);
  const auto& mg = result.rows[0];
  const auto& tr = result.rows[1];
  const double ratio = tr.ratio ? *tr.ratio : 0.0;
  const auto iters = [](const BenchRow& r) { return r.iterations_to_target ? *r.iterations_to_target : -1L; };
  return {tr.ratio.has_value() && ratio >= kRatioFloor,
          fmt("target %.4f: magnet %ld, triplet %ld iterations, ratio %.2f (>= %.1f)", result.target, iters(mg),
              iters(tr), ratio, kRatioFloor)};
}

ExperimentConfig hierarchy_config(Objective o) {
  ExperimentConfig c;
  c.name = to_string(o);
  c.objective = o;
  c.seed = kSeed;
  c.iterations = 2000;
  c.eval_interval = 100;
  c.data.generator = "hierarchy";
  c.data.collapse = "random";
  c.layer_dims = {2, 32, 16};
  c.magnet.k = {2};
  c.magnet.m = 4;
  c.magnet.d = 4;
  c.triplet.batch = 5;
  return c;
}

Outcome hierarchy_recovery() {
  const auto mc = hierarchy_config(Objective::magnet);
  const auto data = prepare_data(mc);
  const auto m = train(mc, data).report.hierarchy;
  const auto t = train(hierarchy_config(Objective::triplet), data).report.hierarchy;
  if (!m || !t || !m->error_at_5 || !t->error_at_5) return {false, "hierarchy report missing"};
  const bool ok = m->error_at_1 < kFineChance && m->error_at_1 < t->error_at_1 && *m->error_at_5 <= m->error_at_1 &&
                  *t->error_at_5 <= t->error_at_1;
  return {ok, fmt("magnet error@1 %.4f error@5 %.4f, triplet error@1 %.4f error@5 %.4f, chance %.3f", m->error_at_1,
                  *m->error_at_5, t->error_at_1, *t->error_at_5, kFineChance)};
}

ExperimentConfig attribute_config(Objective o) {
  ExperimentConfig c;
  c.name = to_string(o);
  c.objective = o;
  c.seed = kSeed;
  c.iterations = 2000;
  c.eval_interval = 100;
  c.data.generator = "attributes";
  c.layer_dims = {2, 32, 16};
  c.magnet.k = {2};
  c.magnet.m = 4;
  c.magnet.d = 4;
  c.batch_size = 16;
  return c;
}

Outcome attribute_precision_check() {
  const auto mc = attribute_config(Objective::magnet);
  const auto data = prepare_data(mc);
  const auto& attrs = data.test.attributes;
  if (!attrs || attrs->rows() != 5) return {false, "attribute benchmark missing"};
  const std::vector<int> sizes{5, 10, 20};
  const std::vector<int> aligned{0, 1, 2, 3}, control{4};
  const auto magnet_reps = embed(train(mc, data).state.model, data.test.inputs);
  const auto softmax_reps = embed(train(attribute_config(Objective::softmax), data).state.model, data.test.inputs);
  const auto m = attribute_precision(magnet_reps, attrs, sizes, aligned);
  const auto s = attribute_precision(softmax_reps, attrs, sizes, aligned);
  const auto ctl = attribute_precision(magnet_reps, attrs, sizes, control);

  // a neighbour of an example featuring the attribute is one of the other N - 1
  const double featuring = attrs->row(4).sum();
  const double frequency = (featuring - 1.0) / static_cast<double>(attrs->cols() - 1);
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double z = std::abs(ctl.precision[i] - frequency) / ctl.standard_error[i];
    ok = ok && m.precision[i] >= s.precision[i] && z <= kControlStandardErrors;
    detail += fmt("@%d magnet %.4f softmax %.4f control %.4f (%.1f se); ", sizes[i], m.precision[i], s.precision[i],
                  ctl.precision[i], z);
  }
  return {ok, detail + fmt("control frequency %.4f", frequency)};
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / fs::path("magnet_acceptance_" + std::to_string(::getpid()));
  auto c = interleaved_config(Objective::magnet);
  c.iterations = 500;
  run_train(c, (root / "a").string());
  run_train(c, (root / "b").string());
  const auto read = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const auto a = read(root / "a" / "metrics.csv"), b = read(root / "b" / "metrics.csv");
  fs::remove_all(root);
  return {!a.empty() && a == b, fmt("%zu bytes, %s", a.size(), a == b ? "identical" : "different")};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "gradient fidelity", gradient_fidelity},
      {2, "triplet reduction", triplet_reduction},
      {3, "full vs stochastic objective", full_vs_stochastic},
      {4, "hand-computed loss", hand_computed_loss},
      {5, "k-means properties", kmeans_properties},
      {6, "kNC/NCM equivalence", knc_ncm_equivalence},
      {7, "multimodal separation", multimodal_separation},
      {8, "convergence efficiency", convergence_efficiency},
      {9, "hierarchy recovery", hierarchy_recovery},
      {10, "attribute precision", attribute_precision_check},
      {11, "determinism", determinism},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.number) == wanted.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.number, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
