#include "magnet/eval.hpp"

#include "magnet/index.hpp"

#include <json.hpp>

#include <numeric>

namespace magnet {

void EvalContext::validate() const {
  if (points.cols() == 0) throw ContractError("evaluation context holds no reference points");
  if (static_cast<Index>(classes.size()) != points.cols()) throw ShapeError("context classes do not match points");
  if (!(variance > 0.0)) throw ContractError("evaluation variance must be positive");
  if (neighbours < 1) throw ContractError("neighbourhood size must be >= 1");
  for (int c : classes)
    if (c < 0 || c >= class_count) throw ContractError("context class out of range");
}

namespace {

Classification classify(const EvalContext& ctx, const Eigen::VectorXd& r) {
  ctx.validate();
  if (r.size() != ctx.points.rows()) throw ShapeError("representation does not match context dimension");
  Classification out;
  out.scores = neighbour_class_scores(ctx.points, ctx.classes, ctx.class_count, ctx.variance, ctx.neighbours, r);
  out.label = argmax_lowest(out.scores);
  return out;
}

}  // namespace

Classification knc_classify(const EvalContext& ctx, const Eigen::VectorXd& representation) {
  return classify(ctx, representation);
}

Classification soft_knn_classify(const EvalContext& ctx, const Eigen::VectorXd& representation) {
  return classify(ctx, representation);
}

std::vector<int> classify_all(const EvalContext& ctx, const Eigen::MatrixXd& representations) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(representations.cols()));
  for (Index i = 0; i < representations.cols(); ++i) out.push_back(classify(ctx, representations.col(i)).label);
  return out;
}

double error_rate(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  if (labels.empty()) throw ContractError("error rate of an empty set");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) wrong += predictions[i] != labels[i];
  return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

std::vector<int> ranked_classes(const Eigen::VectorXd& scores) {
  std::vector<int> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) > scores(b); });
  return order;
}

AttributePrecision attribute_precision(const Eigen::MatrixXd& representations,
                                       const std::optional<Eigen::MatrixXi>& attributes,
                                       const std::vector<int>& sizes, const std::vector<int>& attribute_rows) {
  if (!attributes) throw ConfigError("dataset has no attributes");
  const Index n = representations.cols();
  const auto& attrs = *attributes;
  if (attrs.cols() != n) throw ShapeError("attributes do not match representations");
  std::vector<int> rows = attribute_rows;
  if (rows.empty()) {
    rows.resize(static_cast<std::size_t>(attrs.rows()));
    std::iota(rows.begin(), rows.end(), 0);
  }
  for (int s : sizes)
    if (s < 1 || s >= n) throw ConfigError("neighbourhood size must lie in [1, N)");
  const int max_size = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());

  AttributePrecision out;
  out.sizes = sizes;
  std::vector<double> sum(sizes.size(), 0.0), sum_sq(sizes.size(), 0.0);
  std::vector<std::pair<double, Index>> ranked;
  for (Index i = 0; i < n; ++i) {
    bool any = false;
    for (int a : rows) any = any || attrs(a, i) == 1;
    if (!any) continue;
    ranked.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) ranked.emplace_back((representations.col(j) - representations.col(i)).squaredNorm(), j);
    std::partial_sort(ranked.begin(), ranked.begin() + max_size, ranked.end());
    for (int a : rows) {
      if (attrs(a, i) != 1) continue;
      ++out.incidences;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        int shared = 0;
        for (int j = 0; j < sizes[k]; ++j) shared += attrs(a, ranked[j].second);
        const double frac = static_cast<double>(shared) / sizes[k];
        sum[k] += frac;
        sum_sq[k] += frac * frac;
      }
    }
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const double m = out.incidences ? sum[k] / static_cast<double>(out.incidences) : 0.0;
    out.precision.push_back(m);
    double se = 0.0;
    if (out.incidences > 1) {
      const double var = (sum_sq[k] - static_cast<double>(out.incidences) * m * m) /
                         static_cast<double>(out.incidences - 1);
      se = std::sqrt(std::max(var, 0.0) / static_cast<double>(out.incidences));
    }
    out.standard_error.push_back(se);
  }
  return out;
}

HierarchyResult hierarchy_recovery_eval(const Eigen::MatrixXd& train_reps, const std::vector<int>& train_fine,
                                        const Eigen::MatrixXd& test_reps, const std::vector<int>& test_fine,
                                        const HierarchyOptions& options) {
  int fine_classes = 0;
  for (int y : train_fine) fine_classes = std::max(fine_classes, y + 1);
  EvalContext ctx;
  ctx.class_count = fine_classes;
  ctx.variance = options.variance;
  ctx.neighbours = options.neighbours;
  if (options.method == HierarchyMethod::knc) {
    const auto index = build_index_from_representations(train_reps, train_fine, fine_classes,
                                                        {options.clusters_per_class}, options.seed);
    for (int c = 0; c < index.cluster_count(); ++c) {
      if (index.members(c).empty()) continue;
      ctx.classes.push_back(index.cluster_class(c));
    }
    ctx.points.resize(index.dim(), static_cast<Index>(ctx.classes.size()));
    Index col = 0;
    for (int c = 0; c < index.cluster_count(); ++c)
      if (!index.members(c).empty()) ctx.points.col(col++) = index.centers().col(c);
  } else {
    ctx.points = train_reps;
    ctx.classes = train_fine;
  }

  HierarchyResult out;
  std::size_t miss1 = 0, miss5 = 0;
  for (Index i = 0; i < test_reps.cols(); ++i) {
    const auto cls = classify(ctx, test_reps.col(i));
    const auto ranked = ranked_classes(cls.scores);
    const int y = test_fine[i];
    miss1 += ranked.front() != y;
    miss5 += std::find(ranked.begin(), ranked.begin() + std::min<std::ptrdiff_t>(5, std::ssize(ranked)), y) ==
             ranked.begin() + std::min<std::ptrdiff_t>(5, std::ssize(ranked));
  }
  const double n = static_cast<double>(test_reps.cols());
  if (n == 0) throw ContractError("hierarchy evaluation on an empty test set");
  out.error_at_1 = static_cast<double>(miss1) / n;
  if (fine_classes >= 5) out.error_at_5 = static_cast<double>(miss5) / n;
  return out;
}

Eigen::MatrixXi confusion_matrix(const std::vector<int>& predictions, const std::vector<int>& labels,
                                 int class_count) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions and labels differ in length");
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(class_count, class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) ++m(labels[i], predictions[i]);
  return m;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json doc;
  doc["objective"] = report.objective;
  doc["method"] = report.method;
  doc["error_rate"] = report.error_rate;
  doc["examples"] = report.examples;
  nlohmann::json confusion = nlohmann::json::array();
  for (Index r = 0; r < report.confusion.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < report.confusion.cols(); ++c) row.push_back(report.confusion(r, c));
    confusion.push_back(row);
  }
  doc["confusion"] = confusion;
  if (report.attributes) {
    nlohmann::json curve = nlohmann::json::array();
    for (std::size_t k = 0; k < report.attributes->sizes.size(); ++k)
      curve.push_back({{"size", report.attributes->sizes[k]},
                       {"precision", report.attributes->precision[k]},
                       {"standard_error", report.attributes->standard_error[k]}});
    doc["attribute_precision"] = curve;
  }
  if (report.hierarchy) {
    doc["hierarchy"]["error_at_1"] = report.hierarchy->error_at_1;
    if (report.hierarchy->error_at_5)
      doc["hierarchy"]["error_at_5"] = *report.hierarchy->error_at_5;
    else
      doc["hierarchy"]["error_at_5"] = "n/a";
  }
  return doc.dump(2);
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
  auto require = [&](const nlohmann::json& obj, const char* key, bool ok) {
    if (!obj.contains(key)) throw ParseError(std::string("report: missing `") + key + "`");
    if (!ok) throw ParseError(std::string("report: `") + key + "` has the wrong type");
  };
  require(doc, "objective", doc.contains("objective") && doc["objective"].is_string());
  require(doc, "method", doc.contains("method") && doc["method"].is_string());
  require(doc, "error_rate", doc.contains("error_rate") && doc["error_rate"].is_number());
  require(doc, "examples", doc.contains("examples") && doc["examples"].is_number_integer());
  require(doc, "confusion", doc.contains("confusion") && doc["confusion"].is_array());

  EvalReport r;
  r.objective = doc["objective"];
  r.method = doc["method"];
  r.error_rate = doc["error_rate"];
  r.examples = doc["examples"];
  if (r.error_rate < 0.0 || r.error_rate > 1.0) throw ParseError("report: error_rate outside [0, 1]");
  const auto& conf = doc["confusion"];
  const auto c = static_cast<Index>(conf.size());
  r.confusion.resize(c, c);
  for (Index i = 0; i < c; ++i) {
    if (!conf[i].is_array() || static_cast<Index>(conf[i].size()) != c)
      throw ParseError("report: confusion matrix is not square");
    for (Index j = 0; j < c; ++j) {
      if (!conf[i][j].is_number_integer()) throw ParseError("report: confusion entries must be integers");
      r.confusion(i, j) = conf[i][j];
    }
  }
  if (doc.contains("attribute_precision")) {
    if (!doc["attribute_precision"].is_array()) throw ParseError("report: attribute_precision must be an array");
    AttributePrecision ap;
    for (const auto& row : doc["attribute_precision"]) {
      if (!row.contains("size") || !row.contains("precision") || !row["size"].is_number_integer() ||
          !row["precision"].is_number())
        throw ParseError("report: malformed attribute_precision entry");
      ap.sizes.push_back(row["size"]);
      ap.precision.push_back(row["precision"]);
      ap.standard_error.push_back(row.value("standard_error", 0.0));
    }
    r.attributes = ap;
  }
  if (doc.contains("hierarchy")) {
    const auto& h = doc["hierarchy"];
    if (!h.contains("error_at_1") || !h["error_at_1"].is_number()) throw ParseError("report: malformed hierarchy");
    HierarchyResult hr;
    hr.error_at_1 = h["error_at_1"];
    if (h.contains("error_at_5") && h["error_at_5"].is_number()) hr.error_at_5 = h["error_at_5"].get<double>();
    r.hierarchy = hr;
  }
  return r;
}

}  // namespace magnet
