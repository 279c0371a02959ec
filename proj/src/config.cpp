#include "magnet/config.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace magnet {

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::magnet: return "magnet";
    case Objective::triplet: return "triplet";
    case Objective::nca: return "nca";
    case Objective::ncm: return "ncm";
    case Objective::ncmc: return "ncmc";
    case Objective::softmax: return "softmax";
  }
  return "unknown";
}

Objective parse_objective(const std::string& name) {
  for (auto o : {Objective::magnet, Objective::triplet, Objective::nca, Objective::ncm, Objective::ncmc,
                 Objective::softmax})
    if (to_string(o) == name) return o;
  throw ConfigError("unknown objective `" + name + "`");
}

void ExperimentConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  optimizer.validate();
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) throw ConfigError("data.test_fraction must lie in (0, 1)");
  if (data.collapse != "none" && data.collapse != "random") throw ConfigError("data.collapse must be none or random");
  const int sources = !data.generator.empty() + !data.spec_path.empty() + !data.train_path.empty();
  if (sources != 1) throw ConfigError("exactly one of data.generator, data.spec, data.train is required");
  if (objective == Objective::magnet) {
    if (magnet.m < 2 || magnet.d < 1) throw ConfigError("magnet needs M >= 2 and D >= 1");
    if (magnet.m * magnet.d > batch_cap)
      throw ConfigError("M x D = " + std::to_string(magnet.m * magnet.d) + " exceeds batch_cap " +
                        std::to_string(batch_cap));
    if (magnet.k.empty()) throw ConfigError("magnet.K is empty");
    if (magnet.refresh_interval < 0) throw ConfigError("magnet.refresh_interval must be >= 0");
  }
  if (objective == Objective::triplet) {
    if (triplet.batch < 1) throw ConfigError("triplet.batch must be >= 1");
    if (!(triplet.impostor_fraction > 0.0 && triplet.impostor_fraction <= 1.0))
      throw ConfigError("triplet.impostor_fraction must lie in (0, 1]");
    if (triplet.refresh_interval < 0) throw ConfigError("triplet.refresh_interval must be >= 0");
  }
  if (objective == Objective::ncmc && ncmc_k < 1) throw ConfigError("ncmc.K must be >= 1");
  if (eval.neighbours < 1 || eval.knn_neighbours < 1) throw ConfigError("eval neighbourhood sizes must be >= 1");
  if (!(eval.sigma_decay >= 0.0 && eval.sigma_decay < 1.0)) throw ConfigError("eval.sigma_decay must lie in [0, 1)");
  if ((objective == Objective::ncm || objective == Objective::ncmc) && !layer_dims.empty() && layer_dims.size() != 2)
    throw ConfigError("ncm/ncmc learn a linear map: model.layer_dims must have two entries");
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T out{};
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw ConfigError("config key `" + key + "`: cannot parse `" + value + "`");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key `" + key + "`: expected a boolean, got `" + value + "`");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_value<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key `" + key + "` is empty");
  return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
  ExperimentConfig cfg;
  std::map<std::string, std::string> entries;
  std::stringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (entries.count(key)) throw ConfigError("config key `" + key + "` given twice");
    entries[key] = trim(line.substr(eq + 1));
  }

  auto path = [&](const std::string& p) {
    if (p.empty() || base_dir.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (std::filesystem::path(base_dir) / p).string();
  };

  if (auto it = entries.find("objective"); it != entries.end()) cfg.objective = parse_objective(it->second);

  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"name", [&](auto&, auto& v) { cfg.name = v; }},
      {"objective", [&](auto&, auto&) {}},
      {"seed", [&](auto& k, auto& v) { cfg.seed = parse_value<std::uint64_t>(k, v); }},
      {"iterations", [&](auto& k, auto& v) { cfg.iterations = parse_value<long>(k, v); }},
      {"eval_interval", [&](auto& k, auto& v) { cfg.eval_interval = parse_value<long>(k, v); }},
      {"data.generator", [&](auto&, auto& v) { cfg.data.generator = v; }},
      {"data.spec", [&](auto&, auto& v) { cfg.data.spec_path = path(v); }},
      {"data.train", [&](auto&, auto& v) { cfg.data.train_path = path(v); }},
      {"data.train_attributes", [&](auto&, auto& v) { cfg.data.train_attributes = path(v); }},
      {"data.test", [&](auto&, auto& v) { cfg.data.test_path = path(v); }},
      {"data.test_attributes", [&](auto&, auto& v) { cfg.data.test_attributes = path(v); }},
      {"data.points_per_class", [&](auto& k, auto& v) { cfg.data.points_per_class = parse_value<int>(k, v); }},
      {"data.stddev", [&](auto& k, auto& v) { cfg.data.stddev = parse_value<double>(k, v); }},
      {"data.test_fraction", [&](auto& k, auto& v) { cfg.data.test_fraction = parse_value<double>(k, v); }},
      {"data.collapse", [&](auto&, auto& v) { cfg.data.collapse = v; }},
      {"model.layer_dims", [&](auto& k, auto& v) { cfg.layer_dims = parse_int_list(k, v); }},
      {"optim.learning_rate", [&](auto& k, auto& v) { cfg.optimizer.learning_rate = parse_value<double>(k, v); }},
      {"optim.momentum", [&](auto& k, auto& v) { cfg.optimizer.momentum = parse_value<double>(k, v); }},
      {"optim.anneal_factor", [&](auto& k, auto& v) { cfg.optimizer.anneal_factor = parse_value<double>(k, v); }},
      {"optim.epoch_length",
       [&](auto& k, auto& v) {
         cfg.optimizer.epoch_length = parse_value<long>(k, v);
         cfg.epoch_length_set = true;
       }},
      {"magnet.alpha", [&](auto& k, auto& v) { cfg.magnet.alpha = parse_value<double>(k, v); }},
      {"magnet.K", [&](auto& k, auto& v) { cfg.magnet.k = parse_int_list(k, v); }},
      {"magnet.M", [&](auto& k, auto& v) { cfg.magnet.m = parse_value<int>(k, v); }},
      {"magnet.D", [&](auto& k, auto& v) { cfg.magnet.d = parse_value<int>(k, v); }},
      {"magnet.refresh_interval", [&](auto& k, auto& v) { cfg.magnet.refresh_interval = parse_value<long>(k, v); }},
      {"magnet.variance_normalization",
       [&](auto& k, auto& v) { cfg.magnet.variance_normalization = parse_bool(k, v); }},
      {"triplet.alpha", [&](auto& k, auto& v) { cfg.triplet.alpha = parse_value<double>(k, v); }},
      {"triplet.impostor_fraction",
       [&](auto& k, auto& v) { cfg.triplet.impostor_fraction = parse_value<double>(k, v); }},
      {"triplet.batch", [&](auto& k, auto& v) { cfg.triplet.batch = parse_value<int>(k, v); }},
      {"triplet.normalize", [&](auto& k, auto& v) { cfg.triplet.normalize = parse_bool(k, v); }},
      {"triplet.refresh_interval", [&](auto& k, auto& v) { cfg.triplet.refresh_interval = parse_value<long>(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { cfg.batch_size = parse_value<int>(k, v); }},
      {"batch_cap", [&](auto& k, auto& v) { cfg.batch_cap = parse_value<int>(k, v); }},
      {"ncmc.K", [&](auto& k, auto& v) { cfg.ncmc_k = parse_value<int>(k, v); }},
      {"pretrain.epochs", [&](auto& k, auto& v) { cfg.pretrain_epochs = parse_value<int>(k, v); }},
      {"eval.L", [&](auto& k, auto& v) { cfg.eval.neighbours = parse_value<int>(k, v); }},
      {"eval.knn_L", [&](auto& k, auto& v) { cfg.eval.knn_neighbours = parse_value<int>(k, v); }},
      {"eval.sigma_decay", [&](auto& k, auto& v) { cfg.eval.sigma_decay = parse_value<double>(k, v); }},
      {"eval.attribute_sizes", [&](auto& k, auto& v) { cfg.eval.attribute_sizes = parse_int_list(k, v); }},
  };

  for (const auto& [key, value] : entries) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key `" + key + "`");
    if (key.rfind("magnet.", 0) == 0 && cfg.objective != Objective::magnet)
      throw ConfigError("`" + key + "` is only valid with objective = magnet");
    if (key.rfind("triplet.", 0) == 0 && cfg.objective != Objective::triplet)
      throw ConfigError("`" + key + "` is only valid with objective = triplet");
    if (key.rfind("ncmc.", 0) == 0 && cfg.objective != Objective::ncmc)
      throw ConfigError("`" + key + "` is only valid with objective = ncmc");
    it->second(key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path, bool apply_environment) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  auto cfg = parse_config(buf.str(), std::filesystem::path(path).parent_path().string());
  if (apply_environment)
    if (const char* env = std::getenv(kSeedEnvironmentVariable); env && *env)
      cfg.seed = parse_value<std::uint64_t>(kSeedEnvironmentVariable, env);
  if (cfg.name.empty()) cfg.name = std::filesystem::path(path).stem().string();
  return cfg;
}

}  // namespace magnet
