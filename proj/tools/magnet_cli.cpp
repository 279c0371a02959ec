// magnet: data generation, training, evaluation, benchmarking and gradient
// checks for the metric-learning objectives.

#include "magnet/config.hpp"
#include "magnet/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv(magnet::kSeedEnvironmentVariable);
  if (!env || !*env) return fallback;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw magnet::ConfigError(std::string(magnet::kSeedEnvironmentVariable) + " is not an unsigned integer");
  }
}

magnet::MixtureSpec resolve_spec(const std::string& spec) {
  if (spec == "interleaved") return magnet::interleaved_benchmark();
  if (spec == "hierarchy") return magnet::hierarchy_benchmark();
  if (spec == "attributes") return magnet::attribute_benchmark();
  std::ifstream in(spec);
  if (!in) throw magnet::ConfigError("`" + spec + "` is neither a preset nor a readable spec file");
  std::stringstream buf;
  buf << in.rdbuf();
  return magnet::mixture_spec_from_json(buf.str());
}

std::string attributes_path_for(const std::string& out) {
  std::filesystem::path p(out);
  return (p.parent_path() / (p.stem().string() + ".attributes.csv")).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magnet metric learning"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "sample a Gaussian mixture to CSV");
  std::string spec, out;
  std::uint64_t gen_seed = 0;
  gen->add_option("spec", spec, "preset (interleaved, hierarchy, attributes) or JSON spec file")->required();
  gen->add_option("out", out, "output CSV; attributes go to <stem>.attributes.csv")->required();
  gen->add_option("--seed", gen_seed, "sampling seed (MAGNET_SEED overrides)");

  auto* tr = app.add_subcommand("train", "train one config");
  std::string config_path, outdir;
  std::optional<std::string> resume;
  tr->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  tr->add_option("outdir", outdir)->required();
  tr->add_option("--resume", resume, "checkpoint at an index refresh boundary")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ckpt_path, dataset_path, eval_out;
  std::optional<std::string> eval_attrs;
  ev->add_option("checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  ev->add_option("dataset", dataset_path)->required()->check(CLI::ExistingFile);
  ev->add_option("outdir", eval_out)->required();
  ev->add_option("--attributes", eval_attrs, "row-aligned attribute CSV")->check(CLI::ExistingFile);

  auto* be = app.add_subcommand("bench", "iterations to a target error across configs");
  std::vector<std::string> bench_configs;
  std::optional<double> target;
  std::optional<std::size_t> target_from;
  be->add_option("configs", bench_configs)->required()->check(CLI::ExistingFile);
  auto* target_opt = be->add_option("--target", target, "target validation error");
  auto* from_opt = be->add_option("--target-from", target_from, "use this row's asymptotic error as the target");
  target_opt->excludes(from_opt);
  from_opt->excludes(target_opt);

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every objective");
  std::string gc_config;
  bool inject_fault = false;
  double tolerance = 1e-4;
  gc->add_option("config", gc_config)->required()->check(CLI::ExistingFile);
  gc->add_flag("--inject-fault", inject_fault, "double the first weight gradient");
  gc->add_option("--tolerance", tolerance);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto data = magnet::generate_mixture(resolve_spec(spec), seed_from_env(gen_seed));
      if (const auto dir = std::filesystem::path(out).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
      std::optional<std::string> attrs;
      if (data.attributes) attrs = attributes_path_for(out);
      magnet::save_dataset(data, out, attrs);
      std::cout << "wrote " << data.size() << " examples, " << data.class_count << " classes to " << out << "\n";
    } else if (*tr) {
      const auto config = magnet::load_config(config_path);
      const auto result = magnet::run_train(config, outdir, resume);
      std::cout << config.name << ": " << magnet::to_string(config.objective) << " test error "
                << result.report.error_rate << " after " << result.state.iteration << " iterations\n";
    } else if (*ev) {
      const auto report = magnet::run_eval(ckpt_path, dataset_path, eval_attrs, eval_out);
      std::cout << report.objective << " (" << report.method << ") error " << report.error_rate << " on "
                << report.examples << " examples\n";
    } else if (*be) {
      if (!target && !target_from) throw magnet::ConfigError("bench needs --target or --target-from");
      std::vector<magnet::ExperimentConfig> configs;
      for (const auto& p : bench_configs) configs.push_back(magnet::load_config(p));
      std::cout << magnet::bench_table(magnet::bench(configs, target, target_from));
    } else if (*gc) {
      const auto config = magnet::load_config(gc_config);
      bool ok = true;
      for (const auto& row : magnet::grad_check_objectives(config, inject_fault, tolerance)) {
        std::cout << magnet::to_string(row.objective) << ": max relative error " << row.report.max_relative_error
                  << " over " << row.report.checked << " coordinates (" << row.report.skipped << " skipped) "
                  << (row.report.passed ? "ok" : "FAILED") << "\n";
        ok = ok && row.report.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const magnet::NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << " (batch written to nonfinite_batch.json)\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
