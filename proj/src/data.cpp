#include "magnet/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace magnet {

void Dataset::validate() const {
  const Index n = size();
  if (n < 1) throw ContractError("dataset is empty");
  if (static_cast<Index>(labels.size()) != n)
    throw ContractError("labels and inputs differ in length");
  if (attributes && attributes->cols() != n)
    throw ContractError("attributes and inputs differ in length");
  std::vector<int> seen(static_cast<std::size_t>(std::max(class_count, 0)), 0);
  for (int y : labels) {
    if (y < 0 || y >= class_count) throw ContractError("label out of range");
    ++seen[y];
  }
  for (int c = 0; c < class_count; ++c)
    if (seen[c] == 0) throw ContractError("class " + std::to_string(c) + " has no examples");
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.class_count = class_count;
  out.class_values = class_values;
  out.inputs.resize(dim(), static_cast<Index>(indices.size()));
  out.labels.reserve(indices.size());
  if (attributes) out.attributes = Eigen::MatrixXi(attributes->rows(), out.inputs.cols());
  for (Index j = 0; j < out.inputs.cols(); ++j) {
    const int i = indices[j];
    out.inputs.col(j) = inputs.col(i);
    out.labels.push_back(labels[i]);
    if (attributes) out.attributes->col(j) = attributes->col(i);
  }
  return out;
}

std::vector<std::vector<int>> Dataset::class_members() const {
  std::vector<std::vector<int>> members(class_count);
  for (Index i = 0; i < size(); ++i) members[labels[i]].push_back(static_cast<int>(i));
  return members;
}

void MixtureSpec::validate() const {
  if (classes.empty()) throw ConfigError("mixture spec has no classes");
  Index dim = -1;
  std::size_t attr_len = 0;
  bool attr_seen = false;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].empty()) throw ConfigError("class " + std::to_string(c) + " has no modes");
    for (const auto& mode : classes[c]) {
      if (mode.count < 1) throw ConfigError("mode count must be >= 1");
      if (!(mode.stddev >= 0.0)) throw ConfigError("mode deviation must be >= 0");
      if (mode.center.size() == 0) throw ConfigError("mode center is empty");
      if (dim < 0) dim = mode.center.size();
      if (mode.center.size() != dim) throw ConfigError("mode centers differ in dimension");
      if (!attr_seen) {
        attr_len = mode.attributes.size();
        attr_seen = true;
      } else if (mode.attributes.size() != attr_len) {
        throw ConfigError("attribute rule has inconsistent lengths");
      }
      for (int a : mode.attributes)
        if (a != 0 && a != 1) throw ConfigError("attributes must be 0 or 1");
    }
  }
  for (double r : random_attribute_rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("attribute rate must lie in [0, 1]");
}

Dataset generate_mixture(const MixtureSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Index dim = spec.classes.front().front().center.size();
  const Index mode_attrs = static_cast<Index>(spec.classes.front().front().attributes.size());
  const Index attr_count = mode_attrs + static_cast<Index>(spec.random_attribute_rates.size());

  Index n = 0;
  for (const auto& modes : spec.classes)
    for (const auto& mode : modes) n += mode.count;

  Dataset out;
  out.class_count = static_cast<int>(spec.classes.size());
  out.inputs.resize(dim, n);
  out.labels.reserve(n);
  if (attr_count > 0) out.attributes = Eigen::MatrixXi::Zero(attr_count, n);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Index col = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (const auto& mode : spec.classes[c]) {
      for (int i = 0; i < mode.count; ++i, ++col) {
        for (Index k = 0; k < dim; ++k)
          out.inputs(k, col) = mode.center(k) + (mode.stddev > 0.0 ? mode.stddev * gauss(rng) : 0.0);
        out.labels.push_back(static_cast<int>(c));
        for (Index a = 0; a < mode_attrs; ++a) (*out.attributes)(a, col) = mode.attributes[a];
        for (std::size_t r = 0; r < spec.random_attribute_rates.size(); ++r)
          (*out.attributes)(mode_attrs + static_cast<Index>(r), col) =
              unit(rng) < spec.random_attribute_rates[r] ? 1 : 0;
      }
    }
  }
  return out;
}

MixtureSpec interleaved_benchmark(int points_per_class, double stddev) {
  MixtureSpec spec;
  const int half = points_per_class / 2;
  auto mode = [&](double x, double y, int count) {
    return MixtureMode{Eigen::Vector2d(x, y), stddev, count, {}};
  };
  spec.classes = {
      {mode(1, 1, half), mode(-1, -1, points_per_class - half)},
      {mode(1, -1, half), mode(-1, 1, points_per_class - half)},
  };
  return spec;
}

MixtureSpec hierarchy_benchmark(int fine_classes, int points_per_class, double stddev) {
  MixtureSpec spec;
  for (int c = 0; c < fine_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / fine_classes;
    Eigen::Vector2d center(3.0 * std::cos(angle), 3.0 * std::sin(angle));
    spec.classes.push_back({MixtureMode{center, stddev, points_per_class, {}}});
  }
  return spec;
}

MixtureSpec attribute_benchmark(int points_per_mode, double stddev) {
  MixtureSpec spec;
  const int slots = 8;
  spec.classes.resize(4);
  for (int slot = 0; slot < slots; ++slot) {
    const double angle = 2.0 * std::numbers::pi * slot / slots;
    Eigen::Vector2d center(3.0 * std::cos(angle), 3.0 * std::sin(angle));
    // Class c owns slots c and c + 4.
    const int cls = slot % 4;
    std::vector<int> attrs = {
        center.y() > 1e-9 ? 1 : 0,
        center.x() > 1e-9 ? 1 : 0,
        slot % 2 == 0 ? 1 : 0,
        slot < 4 ? 1 : 0,
    };
    spec.classes[cls].push_back(MixtureMode{center, stddev, points_per_mode, attrs});
  }
  spec.random_attribute_rates = {0.3};
  return spec;
}

MixtureSpec mixture_spec_from_json(const std::string& text) {
  MixtureSpec spec;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& cls : doc.at("classes")) {
      std::vector<MixtureMode> modes;
      for (const auto& m : cls.at("modes")) {
        MixtureMode mode;
        const auto center = m.at("center").get<std::vector<double>>();
        mode.center = Eigen::Map<const Eigen::VectorXd>(center.data(), static_cast<Index>(center.size()));
        mode.stddev = m.value("stddev", 0.0);
        mode.count = m.at("count").get<int>();
        if (m.contains("attributes")) mode.attributes = m.at("attributes").get<std::vector<int>>();
        modes.push_back(std::move(mode));
      }
      spec.classes.push_back(std::move(modes));
    }
    if (doc.contains("random_attribute_rates"))
      spec.random_attribute_rates = doc.at("random_attribute_rates").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mixture spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string mixture_spec_to_json(const MixtureSpec& spec) {
  nlohmann::json doc;
  doc["classes"] = nlohmann::json::array();
  for (const auto& modes : spec.classes) {
    nlohmann::json cls;
    cls["modes"] = nlohmann::json::array();
    for (const auto& mode : modes) {
      nlohmann::json m;
      m["center"] = std::vector<double>(mode.center.data(), mode.center.data() + mode.center.size());
      m["stddev"] = mode.stddev;
      m["count"] = mode.count;
      if (!mode.attributes.empty()) m["attributes"] = mode.attributes;
      cls["modes"].push_back(m);
    }
    doc["classes"].push_back(cls);
  }
  if (!spec.random_attribute_rates.empty()) doc["random_attribute_rates"] = spec.random_attribute_rates;
  return doc.dump(2);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return fields;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string at_line(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

Eigen::MatrixXi load_attributes(const std::string& path, Index rows) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(at_line(path, 1) + "missing header");
  const auto header = split_fields(line);
  const Index width = static_cast<Index>(header.size());
  for (Index a = 0; a < width; ++a)
    if (header[a] != "a" + std::to_string(a))
      throw ParseError(at_line(path, 1) + "expected column a" + std::to_string(a));
  std::vector<int> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (static_cast<Index>(fields.size()) != width)
      throw ParseError(at_line(path, lineno) + "expected " + std::to_string(width) + " attributes, found " +
                       std::to_string(fields.size()));
    for (auto f : fields) {
      int v = 0;
      if (!parse_number(f, v) || (v != 0 && v != 1))
        throw ParseError(at_line(path, lineno) + "attribute must be 0 or 1");
      values.push_back(v);
    }
  }
  const Index n = width == 0 ? 0 : static_cast<Index>(values.size()) / width;
  if (n != rows)
    throw ParseError(path + ": " + std::to_string(n) + " attribute rows for " + std::to_string(rows) +
                     " examples");
  return Eigen::Map<const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>>(values.data(), width, n);
}

}  // namespace

Dataset load_dataset(const std::string& path, const std::optional<std::string>& attributes_path,
                     const std::vector<long long>& class_values) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(at_line(path, 1) + "missing header");
  const auto header = split_fields(line);
  if (header.empty() || header.front() != "label")
    throw ParseError(at_line(path, 1) + "first column must be `label`");
  const Index dim = static_cast<Index>(header.size()) - 1;
  if (dim < 1) throw ParseError(at_line(path, 1) + "no feature columns");

  std::vector<double> values;
  std::vector<int> labels;
  std::unordered_map<long long, int> remap;
  std::vector<long long> values_seen;
  const bool fixed = !class_values.empty();
  for (std::size_t c = 0; c < class_values.size(); ++c) remap.emplace(class_values[c], static_cast<int>(c));
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (static_cast<Index>(fields.size()) != dim + 1)
      throw ParseError(at_line(path, lineno) + "expected " + std::to_string(dim) + " features, found " +
                       std::to_string(static_cast<long>(fields.size()) - 1));
    long long raw = 0;
    if (!parse_number(fields[0], raw)) throw ParseError(at_line(path, lineno) + "bad label");
    auto it = remap.find(raw);
    if (it == remap.end()) {
      if (fixed) throw ParseError(at_line(path, lineno) + "label " + std::to_string(raw) + " unknown to the model");
      it = remap.emplace(raw, static_cast<int>(remap.size())).first;
      values_seen.push_back(raw);
    }
    labels.push_back(it->second);
    for (Index k = 1; k <= dim; ++k) {
      double v = 0.0;
      if (!parse_number(fields[k], v)) throw ParseError(at_line(path, lineno) + "bad feature value");
      values.push_back(v);
    }
  }
  if (labels.empty()) throw ParseError(path + ": no data rows");

  Dataset out;
  out.inputs = Eigen::Map<const Eigen::MatrixXd>(values.data(), dim, static_cast<Index>(labels.size()));
  out.labels = std::move(labels);
  out.class_count = static_cast<int>(remap.size());
  out.class_values = fixed ? class_values : values_seen;
  if (attributes_path) out.attributes = load_attributes(*attributes_path, out.size());
  if (!fixed) out.validate();
  return out;
}

void save_dataset(const Dataset& data, const std::string& path,
                  const std::optional<std::string>& attributes_path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "label";
  for (Index k = 0; k < data.dim(); ++k) out << ",f" << k;
  out << '\n';
  char buf[40];
  for (Index i = 0; i < data.size(); ++i) {
    if (data.class_values.empty())
      out << data.labels[i];
    else
      out << data.class_values[data.labels[i]];
    for (Index k = 0; k < data.dim(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", data.inputs(k, i));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (attributes_path && data.attributes) {
    std::ofstream aout(*attributes_path);
    if (!aout) throw ConfigError("cannot write " + *attributes_path);
    const auto& attrs = *data.attributes;
    for (Index a = 0; a < attrs.rows(); ++a) aout << (a ? "," : "") << 'a' << a;
    aout << '\n';
    for (Index i = 0; i < attrs.cols(); ++i) {
      for (Index a = 0; a < attrs.rows(); ++a) aout << (a ? "," : "") << attrs(a, i);
      aout << '\n';
    }
  }
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test fraction must lie in (0, 1)");
  auto members = data.class_members();
  std::mt19937_64 rng(seed);
  std::vector<char> is_test(static_cast<std::size_t>(data.size()), 0);
  for (int c = 0; c < data.class_count; ++c) {
    auto& idx = members[c];
    if (idx.size() < 2)
      throw ConfigError("cannot split class " + std::to_string(c) + ": fewer than 2 examples");
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(idx.size()))));
    for (std::size_t j = 0; j < n_test; ++j) is_test[idx[j]] = 1;
  }
  std::vector<int> train_idx, test_idx;
  for (Index i = 0; i < data.size(); ++i) (is_test[i] ? test_idx : train_idx).push_back(static_cast<int>(i));
  return {data.subset(train_idx), data.subset(test_idx)};
}

CollapsedLabels collapse_labels(const Dataset& data, const std::vector<std::pair<int, int>>& pairing) {
  std::vector<int> super(static_cast<std::size_t>(data.class_count), -1);
  for (std::size_t p = 0; p < pairing.size(); ++p) {
    for (int c : {pairing[p].first, pairing[p].second}) {
      if (c < 0 || c >= data.class_count)
        throw ConfigError("pairing names unknown class " + std::to_string(c));
      if (super[c] != -1) throw ConfigError("class " + std::to_string(c) + " appears in two pairs");
      super[c] = static_cast<int>(p);
    }
  }
  for (int c = 0; c < data.class_count; ++c)
    if (super[c] == -1) throw ConfigError("class " + std::to_string(c) + " is unpaired");

  CollapsedLabels out{data, data.labels};
  out.data.class_count = static_cast<int>(pairing.size());
  for (auto& y : out.data.labels) y = super[y];
  return out;
}

std::vector<std::pair<int, int>> random_pairing(int class_count, std::uint64_t seed) {
  if (class_count < 2 || class_count % 2 != 0)
    throw ConfigError("random pairing needs an even class count");
  std::vector<int> order(static_cast<std::size_t>(class_count));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < class_count; i += 2) pairs.emplace_back(order[i], order[i + 1]);
  return pairs;
}

}  // namespace magnet
