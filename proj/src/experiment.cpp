#include "magnet/experiment.hpp"

#include "magnet/losses.hpp"
#include "magnet/ncm.hpp"
#include "magnet/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace magnet {

namespace {

// seed streams
constexpr std::uint64_t kDataStream = 0xda7a;
constexpr std::uint64_t kSplitStream = 0x5711;
constexpr std::uint64_t kPairStream = 0x9a12;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kHeadStream = 0x4ead;
constexpr std::uint64_t kStepStream = 0x57e9;
constexpr std::uint64_t kPretrainStream = 0x97e7;
constexpr std::uint64_t kIndexStream = 0x1d8;
constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kCentroidStream = 0xc3d;
constexpr std::uint64_t kGradStream = 0x96ad;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

MixtureSpec preset(const DataSource& src) {
  auto pick = [](int v, int dflt) { return v > 0 ? v : dflt; };
  auto pickd = [](double v, double dflt) { return v > 0.0 ? v : dflt; };
  if (src.generator == "interleaved") return interleaved_benchmark(pick(src.points_per_class, 500), pickd(src.stddev, 0.4));
  if (src.generator == "hierarchy")
    return hierarchy_benchmark(8, pick(src.points_per_class, 150), pickd(src.stddev, 0.25));
  if (src.generator == "attributes")
    return attribute_benchmark(pick(src.points_per_class, 240) / 2, pickd(src.stddev, 0.3));
  throw ConfigError("unknown data.generator `" + src.generator + "`");
}

std::vector<int> model_dims(const ExperimentConfig& config, Index input_dim) {
  std::vector<int> dims = config.layer_dims;
  const bool linear = config.objective == Objective::ncm || config.objective == Objective::ncmc;
  if (dims.empty()) dims = linear ? std::vector<int>{static_cast<int>(input_dim), 64}
                                  : std::vector<int>{static_cast<int>(input_dim), 64, 64};
  if (dims.front() != input_dim)
    throw ConfigError("model.layer_dims starts at " + std::to_string(dims.front()) + " but the data has " +
                      std::to_string(input_dim) + " features");
  for (int d : dims)
    if (d < 1) throw ConfigError("model.layer_dims entries must be positive");
  return dims;
}

double pooled_class_variance(const Eigen::MatrixXd& reps, const std::vector<int>& labels, int class_count) {
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(reps.rows(), class_count);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(class_count);
  for (Index i = 0; i < reps.cols(); ++i) {
    means.col(labels[i]) += reps.col(i);
    counts(labels[i]) += 1.0;
  }
  for (int c = 0; c < class_count; ++c)
    if (counts(c) > 0) means.col(c) /= counts(c);
  double sum = 0.0;
  for (Index i = 0; i < reps.cols(); ++i) sum += (reps.col(i) - means.col(labels[i])).squaredNorm();
  const double n = static_cast<double>(reps.cols());
  return std::max(n > 1 ? sum / (n - 1) : 0.0, kVarianceFloor);
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& inputs, const std::vector<int>& cols) {
  Eigen::MatrixXd out(inputs.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Index>(j)) = inputs.col(cols[j]);
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& cols) {
  std::vector<int> out;
  out.reserve(cols.size());
  for (int c : cols) out.push_back(labels[c]);
  return out;
}

std::vector<int> uniform_batch(Index n, int size, std::mt19937_64& rng) {
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const auto take = static_cast<std::size_t>(std::min<Index>(n, size));
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(take);
  return all;
}

NcmMode ncm_mode(Objective o) { return o == Objective::ncmc ? NcmMode::multi_centroid : NcmMode::single_mean; }

Parameters transform_gradients(const Mlp& model, const Eigen::MatrixXd& grad_transform) {
  auto g = Parameters::zeros_like(model.dims);
  g.weights[0] = grad_transform;
  return g;
}

NcmModel ncm_view(const Mlp& model, const std::vector<Eigen::MatrixXd>& centroids) {
  return {model.params.weights[0], centroids};
}

std::string nonfinite_dump(const std::string& objective, long iteration, const Eigen::MatrixXd& inputs,
                           const std::vector<int>& examples, const Eigen::MatrixXd& reps) {
  nlohmann::json doc;
  doc["objective"] = objective;
  doc["iteration"] = iteration;
  doc["examples"] = examples;
  auto columns = [](const Eigen::MatrixXd& m) {
    nlohmann::json out = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) {
      nlohmann::json col = nlohmann::json::array();
      for (Index i = 0; i < m.rows(); ++i)
        col.push_back(std::isfinite(m(i, j)) ? nlohmann::json(m(i, j)) : nlohmann::json(std::to_string(m(i, j))));
      out.push_back(col);
    }
    return out;
  };
  doc["inputs"] = columns(inputs);
  doc["representations"] = columns(reps);
  return doc.dump(2);
}

void require_finite(double loss, const std::string& objective, long iteration, const Eigen::MatrixXd& inputs,
                    const std::vector<int>& examples, const Eigen::MatrixXd& reps) {
  if (std::isfinite(loss)) return;
  throw NonFiniteLoss(objective + " loss is not finite at iteration " + std::to_string(iteration),
                      nonfinite_dump(objective, iteration, inputs, examples, reps));
}

class Trainer {
 public:
  Trainer(const ExperimentConfig& config, const ExperimentData& data)
      : config_(config), data_(data), dims_(model_dims(config, data.train.dim())) {
    config_.validate();
    opt_ = config_.optimizer;
    opt_.epoch_length = resolved_epoch_length(config_, data_);
    refresh_ = resolved_refresh_interval(config_, data_);
    if (linear()) centroids_ = fit_class_centroids(data_.train, ncm_mode(config_.objective), config_.ncmc_k,
                                                    derive_seed(config_.seed, kCentroidStream));
  }

  TrainResult run(const Checkpoint* resume, const CheckpointSink& on_refresh) {
    TrainResult result;
    auto& state = result.state;
    long start = 0;
    if (resume) {
      check_resume(*resume);
      state = *resume;
      start = resume->iteration;
    } else {
      state.objective = to_string(config_.objective);
      state.model = make_mlp(dims_, derive_seed(config_.seed, kInitStream));
      if (config_.objective == Objective::softmax)
        state.head = make_mlp({dims_.back(), data_.train.class_count}, derive_seed(config_.seed, kHeadStream));
      if (config_.pretrain_epochs > 0 && config_.objective != Objective::softmax) pretrain(state);
    }
    state.class_values = data_.train.class_values;

    std::optional<ClusterIndex> index;
    Eigen::MatrixXd triplet_reps;
    if (config_.objective == Objective::magnet) {
      index = build_index(state.model, data_.train, config_.magnet.k, derive_seed(config_.seed, kIndexStream, start),
                          start);
      if (resume && static_cast<Index>(resume->loss_cache.size()) == data_.train.size())
        index->set_loss_cache(resume->loss_cache);
    }
    if (config_.objective == Objective::triplet) triplet_reps = embed(state.model, data_.train.inputs);

    for (long it = start; it < config_.iterations; ++it) {
      if (it != start && it % refresh_ == 0) {
        if (on_refresh) {
          Checkpoint snapshot = state;
          if (index) snapshot.loss_cache = index->loss_cache();
          on_refresh(snapshot);
        }
        if (index)
          index = build_index(state.model, data_.train, config_.magnet.k, derive_seed(config_.seed, kIndexStream, it),
                              it, &*index);
        if (config_.objective == Objective::triplet) triplet_reps = embed(state.model, data_.train.inputs);
      }
      std::mt19937_64 rng(derive_seed(config_.seed, kStepStream, static_cast<std::uint64_t>(it)));
      MetricsRow row;
      row.iter = it;
      switch (config_.objective) {
        case Objective::magnet: row.train_loss = magnet_step(state, *index, rng, it); break;
        case Objective::triplet: row.train_loss = triplet_step(state, triplet_reps, rng, it); break;
        case Objective::nca: row.train_loss = nca_step(state, rng, it); break;
        case Objective::ncm:
        case Objective::ncmc: row.train_loss = ncm_step(state, rng, it); break;
        case Objective::softmax: row.train_loss = softmax_step(state, *state.head, rng, it, true); break;
      }
      state.iteration = it + 1;
      if ((it + 1) % config_.eval_interval == 0) {
        Checkpoint probe = state;
        probe.context = make_eval_context(config_, probe, data_.train, it + 1);
        row.val_error = error_rate(predict(probe, data_.test.inputs), data_.test.labels);
      }
      result.log.push_back(row);
    }

    if (index) state.loss_cache = index->loss_cache();
    state.context = make_eval_context(config_, state, data_.train, state.iteration);
    result.report = evaluate(state, data_.test, config_.eval.attribute_sizes);
    if (data_.train_fine && data_.test_fine) result.report.hierarchy = hierarchy(state);
    result.index = std::move(index);
    return result;
  }

 private:
  bool linear() const { return config_.objective == Objective::ncm || config_.objective == Objective::ncmc; }

  void check_resume(const Checkpoint& ckpt) const {
    if (ckpt.objective != to_string(config_.objective))
      throw ConfigError("checkpoint objective `" + ckpt.objective + "` does not match the config");
    if (ckpt.model.dims != dims_) throw ConfigError("checkpoint model shape does not match the config");
    if (ckpt.iteration > config_.iterations) throw ConfigError("checkpoint is past the configured iterations");
    const bool refreshing = config_.objective == Objective::magnet || config_.objective == Objective::triplet;
    if (refreshing && ckpt.iteration % refresh_ != 0)
      throw ConfigError("checkpoint iteration " + std::to_string(ckpt.iteration) +
                        " is not on an index refresh boundary (every " + std::to_string(refresh_) + ")");
    if (config_.objective == Objective::softmax && !ckpt.head) throw ConfigError("softmax checkpoint has no head");
  }

  void pretrain(Checkpoint& state) {
    Mlp head = make_mlp({dims_.back(), data_.train.class_count}, derive_seed(config_.seed, kHeadStream, 1));
    const long steps = static_cast<long>(config_.pretrain_epochs) * opt_.epoch_length;
    for (long it = 0; it < steps; ++it) {
      std::mt19937_64 rng(derive_seed(config_.seed, kPretrainStream, static_cast<std::uint64_t>(it)));
      softmax_step(state, head, rng, it, false);
    }
    // the warm-up velocity belongs to another objective
    state.model.velocity = Parameters::zeros_like(dims_);
  }

  double magnet_step(Checkpoint& state, ClusterIndex& index, std::mt19937_64& rng, long it) {
    const auto nb = sample_neighbourhood(index, config_.magnet.m, config_.magnet.d, rng);
    const auto x = gather(data_.train.inputs, nb.examples);
    const auto trace = forward(state.model, x);
    const auto loss = magnet_minibatch_loss(trace.output(), nb.layout(),
                                            MagnetConfig{config_.magnet.alpha, config_.magnet.variance_normalization});
    require_finite(loss.mean_loss, state.objective, it, x, nb.examples, trace.output());
    const auto grads = backward(state.model, trace, loss.gradients);
    sgd_step(state.model, grads.params, opt_, it);

    std::vector<std::pair<int, double>> updates;
    for (std::size_t i = 0; i < nb.examples.size(); ++i)
      updates.emplace_back(nb.examples[i], loss.losses(static_cast<Index>(i)));
    index.update_loss_cache(updates);
    if (!state.eval_variance_seen) {
      state.eval_variance = loss.variance;
      state.eval_variance_seen = true;
    } else {
      const double decay = config_.eval.sigma_decay;
      state.eval_variance = decay * state.eval_variance + (1.0 - decay) * loss.variance;
    }
    return loss.mean_loss;
  }

  double triplet_step(Checkpoint& state, const Eigen::MatrixXd& reps, std::mt19937_64& rng, long it) {
    const auto triplets =
        sample_triplets(reps, data_.train.labels, config_.triplet.batch, config_.triplet.impostor_fraction, rng);
    const auto b = static_cast<Index>(triplets.size());
    std::vector<int> examples(static_cast<std::size_t>(3 * b));
    for (Index j = 0; j < b; ++j) {
      examples[j] = triplets[j].anchor;
      examples[b + j] = triplets[j].positive;
      examples[2 * b + j] = triplets[j].negative;
    }
    const auto x = gather(data_.train.inputs, examples);
    const auto trace = forward(state.model, x);
    const auto& out = trace.output();
    const auto loss = triplet_loss(out.leftCols(b), out.middleCols(b, b), out.rightCols(b), config_.triplet.alpha,
                                   config_.triplet.normalize);
    require_finite(loss.mean_loss, state.objective, it, x, examples, out);
    Eigen::MatrixXd g(out.rows(), 3 * b);
    g << loss.grad_anchor, loss.grad_positive, loss.grad_negative;
    sgd_step(state.model, backward(state.model, trace, g).params, opt_, it);
    return loss.mean_loss;
  }

  double nca_step(Checkpoint& state, std::mt19937_64& rng, long it) {
    const auto examples = uniform_batch(data_.train.size(), config_.batch_size, rng);
    const auto x = gather(data_.train.inputs, examples);
    const auto trace = forward(state.model, x);
    const auto loss = nca_loss(trace.output(), gather_labels(data_.train.labels, examples));
    require_finite(loss.mean_loss, state.objective, it, x, examples, trace.output());
    sgd_step(state.model, backward(state.model, trace, loss.gradients).params, opt_, it);
    return loss.mean_loss;
  }

  double ncm_step(Checkpoint& state, std::mt19937_64& rng, long it) {
    const auto examples = uniform_batch(data_.train.size(), config_.batch_size, rng);
    const auto x = gather(data_.train.inputs, examples);
    const auto loss = ncm_loss(ncm_view(state.model, centroids_), x, gather_labels(data_.train.labels, examples),
                               ncm_mode(config_.objective));
    if (!std::isfinite(loss.mean_loss)) require_finite(loss.mean_loss, state.objective, it, x, examples, embed(state.model, x));
    sgd_step(state.model, transform_gradients(state.model, loss.grad_transform), opt_, it);
    return loss.mean_loss;
  }

  double softmax_step(Checkpoint& state, Mlp& head, std::mt19937_64& rng, long it, bool check) {
    const auto examples = uniform_batch(data_.train.size(), config_.batch_size, rng);
    const auto x = gather(data_.train.inputs, examples);
    const auto trace = forward(state.model, x);
    const auto loss = softmax_xent(head, trace.output(), gather_labels(data_.train.labels, examples));
    if (check) require_finite(loss.mean_loss, state.objective, it, x, examples, trace.output());
    const auto grads = backward(state.model, trace, loss.representation_gradients);
    sgd_step(head, loss.head_gradients, opt_, it);
    sgd_step(state.model, grads.params, opt_, it);
    return loss.mean_loss;
  }

  HierarchyResult hierarchy(const Checkpoint& state) const {
    const auto train_reps = embed(state.model, data_.train.inputs);
    const auto test_reps = embed(state.model, data_.test.inputs);
    HierarchyOptions options;
    options.seed = derive_seed(config_.seed, kEvalStream, 0xf1e);
    if (config_.objective == Objective::magnet) {
      options.method = HierarchyMethod::knc;
      options.clusters_per_class = config_.magnet.k.front();
      options.neighbours = config_.eval.neighbours;
      options.variance = state.eval_variance_seen ? state.eval_variance : state.context->variance;
    } else {
      options.method = HierarchyMethod::soft_knn;
      options.neighbours = config_.eval.knn_neighbours;
      options.variance = pooled_class_variance(train_reps, data_.train.labels, data_.train.class_count);
    }
    return hierarchy_recovery_eval(train_reps, *data_.train_fine, test_reps, *data_.test_fine, options);
  }

  ExperimentConfig config_;
  const ExperimentData& data_;
  std::vector<int> dims_;
  OptimizerConfig opt_;
  long refresh_ = 1;
  std::vector<Eigen::MatrixXd> centroids_;
};

}  // namespace

ExperimentData prepare_data(const ExperimentConfig& config) {
  const auto& src = config.data;
  ExperimentData out;
  if (!src.train_path.empty()) {
    const auto attrs = [](const std::string& p) { return p.empty() ? std::nullopt : std::optional<std::string>(p); };
    Dataset full = load_dataset(src.train_path, attrs(src.train_attributes));
    if (!src.test_path.empty()) {
      out.train = std::move(full);
      out.test = load_dataset(src.test_path, attrs(src.test_attributes), out.train.class_values);
    } else {
      std::tie(out.train, out.test) = split(full, src.test_fraction, derive_seed(config.seed, kSplitStream));
    }
  } else {
    const MixtureSpec spec =
        src.spec_path.empty() ? preset(src) : mixture_spec_from_json(read_file(src.spec_path));
    const Dataset full = generate_mixture(spec, derive_seed(config.seed, kDataStream));
    std::tie(out.train, out.test) = split(full, src.test_fraction, derive_seed(config.seed, kSplitStream));
  }
  if (src.collapse == "random") {
    const auto pairing = random_pairing(out.train.class_count, derive_seed(config.seed, kPairStream));
    auto train = collapse_labels(out.train, pairing);
    auto test = collapse_labels(out.test, pairing);
    out.train = std::move(train.data);
    out.test = std::move(test.data);
    out.train_fine = std::move(train.fine_labels);
    out.test_fine = std::move(test.fine_labels);
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "iter,train_loss,val_error\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.10g,", r.iter, r.train_loss);
    out += buf;
    if (r.val_error) {
      std::snprintf(buf, sizeof buf, "%.10g", *r.val_error);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

long resolved_epoch_length(const ExperimentConfig& config, const ExperimentData& data) {
  if (config.epoch_length_set) return config.optimizer.epoch_length;
  long per_iteration = config.batch_size;
  if (config.objective == Objective::magnet) per_iteration = static_cast<long>(config.magnet.m) * config.magnet.d;
  if (config.objective == Objective::triplet) per_iteration = config.triplet.batch;
  const long n = static_cast<long>(data.train.size());
  return std::max(1L, (n + per_iteration - 1) / per_iteration);
}

long resolved_refresh_interval(const ExperimentConfig& config, const ExperimentData& data) {
  long r = 0;
  if (config.objective == Objective::magnet) r = config.magnet.refresh_interval;
  if (config.objective == Objective::triplet) r = config.triplet.refresh_interval;
  return r > 0 ? r : resolved_epoch_length(config, data);
}

TrainResult train(const ExperimentConfig& config, const ExperimentData& data, const Checkpoint* resume,
                  const CheckpointSink& on_refresh) {
  return Trainer(config, data).run(resume, on_refresh);
}

std::optional<EvalContext> make_eval_context(const ExperimentConfig& config, const Checkpoint& state,
                                             const Dataset& train, long iteration) {
  EvalContext ctx;
  ctx.class_count = train.class_count;
  switch (config.objective) {
    case Objective::softmax: return std::nullopt;
    case Objective::magnet: {
      const auto index = build_index(state.model, train, config.magnet.k,
                                     derive_seed(config.seed, kEvalStream, static_cast<std::uint64_t>(iteration)),
                                     iteration);
      std::vector<int> live;
      for (int c = 0; c < index.cluster_count(); ++c)
        if (!index.members(c).empty()) live.push_back(c);
      ctx.points.resize(index.dim(), static_cast<Index>(live.size()));
      for (std::size_t j = 0; j < live.size(); ++j) {
        ctx.points.col(static_cast<Index>(j)) = index.centers().col(live[j]);
        ctx.classes.push_back(index.cluster_class(live[j]));
      }
      ctx.variance = state.eval_variance_seen ? state.eval_variance : index.variance();
      ctx.neighbours = config.eval.neighbours;
      break;
    }
    case Objective::triplet:
    case Objective::nca:
      ctx.points = embed(state.model, train.inputs);
      ctx.classes = train.labels;
      ctx.variance = pooled_class_variance(ctx.points, train.labels, train.class_count);
      ctx.neighbours = config.eval.knn_neighbours;
      break;
    case Objective::ncm:
    case Objective::ncmc: {
      const auto centroids = fit_class_centroids(train, ncm_mode(config.objective), config.ncmc_k,
                                                 derive_seed(config.seed, kCentroidStream));
      NcmModel view = ncm_view(state.model, centroids);
      ctx.points = projected_centroids(view, ctx.classes);
      ctx.variance = 0.5;
      ctx.neighbours = 1;
      break;
    }
  }
  ctx.validate();
  return ctx;
}

std::vector<int> predict(const Checkpoint& state, const Eigen::MatrixXd& inputs) {
  const auto reps = embed(state.model, inputs);
  if (state.context) return classify_all(*state.context, reps);
  if (!state.head) throw ContractError("checkpoint has neither an evaluation context nor a classifier head");
  const auto logits = embed(*state.head, reps);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(logits.cols()));
  for (Index i = 0; i < logits.cols(); ++i) out.push_back(argmax_lowest(logits.col(i)));
  return out;
}

EvalReport evaluate(const Checkpoint& state, const Dataset& data, const std::vector<int>& attribute_sizes) {
  EvalReport report;
  report.objective = state.objective;
  if (!state.context)
    report.method = "argmax";
  else
    report.method = state.objective == "magnet" ? "knc" : (state.objective == "ncm" || state.objective == "ncmc")
                                                              ? "nearest_centroid"
                                                              : "soft_knn";
  const auto predictions = predict(state, data.inputs);
  report.error_rate = error_rate(predictions, data.labels);
  report.examples = data.size();
  const int classes = state.context ? state.context->class_count : static_cast<int>(state.head->output_dim());
  report.confusion = confusion_matrix(predictions, data.labels, classes);
  if (data.attributes) {
    std::vector<int> sizes;
    for (int s : attribute_sizes)
      if (s >= 1 && s < data.size()) sizes.push_back(s);
    if (!sizes.empty()) report.attributes = attribute_precision(embed(state.model, data.inputs), data.attributes, sizes);
  }
  return report;
}

TrainResult run_train(const ExperimentConfig& config, const std::string& outdir,
                      const std::optional<std::string>& resume_path) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  const auto data = prepare_data(config);
  std::optional<Checkpoint> resume;
  if (resume_path) resume = load_checkpoint_file(*resume_path);
  TrainResult result;
  try {
    const auto refresh_path = (fs::path(outdir) / "checkpoint_refresh.bin").string();
    result = train(config, data, resume ? &*resume : nullptr,
                   [&](const Checkpoint& ckpt) { save_checkpoint_file(refresh_path, ckpt); });
  } catch (const NonFiniteLoss& e) {
    write_file(fs::path(outdir) / "nonfinite_batch.json", e.dump);
    throw;
  }
  write_file(fs::path(outdir) / "metrics.csv", metrics_csv(result.log));
  write_file(fs::path(outdir) / "report.json", report_to_json(result.report));
  save_checkpoint_file((fs::path(outdir) / "checkpoint.bin").string(), result.state);
  if (result.index) write_file(fs::path(outdir) / "index.json", result.index->to_json());
  return result;
}

EvalReport run_eval(const std::string& checkpoint_path, const std::string& dataset_path,
                    const std::optional<std::string>& attributes_path, const std::string& outdir) {
  const auto state = load_checkpoint_file(checkpoint_path);
  const auto data = load_dataset(dataset_path, attributes_path, state.class_values);
  if (data.dim() != state.model.input_dim())
    throw ShapeError("dataset has " + std::to_string(data.dim()) + " features, the model expects " +
                     std::to_string(state.model.input_dim()));
  const auto report = evaluate(state, data);
  std::filesystem::create_directories(outdir);
  write_file(std::filesystem::path(outdir) / "report.json", report_to_json(report));
  return report;
}

std::optional<long> iterations_to_target(const std::vector<MetricsRow>& log, double target) {
  for (const auto& r : log)
    if (r.val_error && *r.val_error <= target) return r.iter + 1;
  return std::nullopt;
}

double asymptotic_error(const std::vector<MetricsRow>& log) {
  std::vector<double> errors;
  for (const auto& r : log)
    if (r.val_error) errors.push_back(*r.val_error);
  if (errors.empty()) throw ContractError("no evaluations were logged");
  const std::size_t tail = std::max<std::size_t>(1, errors.size() / 4);
  return std::accumulate(errors.end() - static_cast<std::ptrdiff_t>(tail), errors.end(), 0.0) /
         static_cast<double>(tail);
}

BenchResult bench(const std::vector<ExperimentConfig>& configs, std::optional<double> target,
                  std::optional<std::size_t> target_from) {
  if (configs.empty()) throw ConfigError("bench needs at least one config");
  if (target.has_value() == target_from.has_value()) throw ConfigError("bench needs exactly one of a target or a reference row");
  if (target_from && *target_from >= configs.size()) throw ConfigError("reference row out of range");
  auto linear = [](const ExperimentConfig& c) { return c.objective == Objective::ncm || c.objective == Objective::ncmc; };
  for (const auto& c : configs) {
    if (!(c.data == configs.front().data) || c.seed != configs.front().seed)
      throw ConfigError("bench configs must share the data source and seed (`" + c.name + "` differs)");
    if (!linear(c) && !linear(configs.front()) && c.layer_dims != configs.front().layer_dims)
      throw ConfigError("bench configs must share model.layer_dims (`" + c.name + "` differs)");
  }
  const auto data = prepare_data(configs.front());
  BenchResult out;
  for (const auto& c : configs) {
    BenchRow row;
    row.name = c.name;
    row.objective = c.objective;
    row.log = train(c, data).log;
    row.asymptotic_error = asymptotic_error(row.log);
    out.rows.push_back(std::move(row));
  }
  out.target = target ? *target : out.rows[*target_from].asymptotic_error;
  for (auto& row : out.rows) row.iterations_to_target = iterations_to_target(row.log, out.target);
  const auto& first = out.rows.front().iterations_to_target;
  for (auto& row : out.rows)
    if (first && row.iterations_to_target)
      row.ratio = static_cast<double>(*row.iterations_to_target) / static_cast<double>(*first);
  return out;
}

std::string bench_table(const BenchResult& result) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "target error %.4f\n%-20s %-8s %12s %12s %8s\n", result.target, "name", "objective",
                "iters", "asymptote", "ratio");
  out += buf;
  for (const auto& r : result.rows) {
    const std::string iters = r.iterations_to_target ? std::to_string(*r.iterations_to_target) : "never";
    char ratio[32] = "n/a";
    if (r.ratio) std::snprintf(ratio, sizeof ratio, "%.2f", *r.ratio);
    std::snprintf(buf, sizeof buf, "%-20s %-8s %12s %12.4f %8s\n", r.name.c_str(), to_string(r.objective).c_str(),
                  iters.c_str(), r.asymptotic_error, ratio);
    out += buf;
  }
  return out;
}

std::vector<GradCheckRow> grad_check_objectives(const ExperimentConfig& config, bool inject_fault, double tolerance) {
  std::vector<int> dims = config.layer_dims.empty() ? std::vector<int>{10, 16, 8} : config.layer_dims;
  if (dims.size() < 2) throw ConfigError("model.layer_dims needs at least two entries");
  std::mt19937_64 rng(derive_seed(config.seed, kGradStream));
  std::normal_distribution<double> normal;
  auto random_matrix = [&](Index rows, Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
  };
  auto fault = [&](Parameters& g) {
    if (inject_fault) g.weights[0] *= 2.0;
  };
  auto with_trace = [](const ForwardTrace& trace, std::vector<double> extra) {
    auto kinks = rectifier_arguments(trace);
    kinks.insert(kinks.end(), extra.begin(), extra.end());
    return kinks;
  };
  auto as_vector = [](const auto& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

  const Mlp net = make_mlp(dims, derive_seed(config.seed, kGradStream, 1));
  const Index in = dims.front();

  std::vector<GradCheckRow> rows;
  auto run = [&](Objective o, const Mlp& model, const LossProbe& probe) {
    GradCheckOptions options;
    options.tolerance = tolerance;
    options.seed = derive_seed(config.seed, kGradStream, 10 + static_cast<std::uint64_t>(o));
    rows.push_back({o, grad_check(model, probe, options)});
  };

  {
    const Eigen::MatrixXd x = random_matrix(in, 12);
    BatchLayout layout{{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3}, {0, 1, 1, 2}};
    const MagnetConfig mc{config.magnet.alpha, config.magnet.variance_normalization};
    run(Objective::magnet, net, [=](const Mlp& m, bool grads) {
      const auto trace = forward(m, x);
      const auto loss = magnet_minibatch_loss(trace.output(), layout, mc);
      ProbeResult r{loss.mean_loss, {}, with_trace(trace, as_vector(loss.hinge_arguments))};
      if (grads) {
        r.gradients = backward(m, trace, loss.gradients).params;
        fault(r.gradients);
      }
      return r;
    });
  }
  {
    const Eigen::MatrixXd x = random_matrix(in, 24);
    const auto ts = config.triplet;
    run(Objective::triplet, net, [=](const Mlp& m, bool grads) {
      const auto trace = forward(m, x);
      const auto& o = trace.output();
      const auto loss = triplet_loss(o.leftCols(8), o.middleCols(8, 8), o.rightCols(8), ts.alpha, ts.normalize);
      ProbeResult r{loss.mean_loss, {}, with_trace(trace, as_vector(loss.hinge_arguments))};
      if (grads) {
        Eigen::MatrixXd g(o.rows(), 24);
        g << loss.grad_anchor, loss.grad_positive, loss.grad_negative;
        r.gradients = backward(m, trace, g).params;
        fault(r.gradients);
      }
      return r;
    });
  }
  {
    const Eigen::MatrixXd x = random_matrix(in, 12);
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) labels.push_back(i % 3);
    run(Objective::nca, net, [=](const Mlp& m, bool grads) {
      const auto trace = forward(m, x);
      const auto loss = nca_loss(trace.output(), labels);
      ProbeResult r{loss.mean_loss, {}, rectifier_arguments(trace)};
      if (grads) {
        r.gradients = backward(m, trace, loss.gradients).params;
        fault(r.gradients);
      }
      return r;
    });
  }
  for (Objective o : {Objective::ncm, Objective::ncmc}) {
    // examples and centroids go through the same network in one pass
    const int per_class = o == Objective::ncmc ? 2 : 1;
    const Eigen::MatrixXd x = random_matrix(in, 12 + 3 * per_class);
    std::vector<int> labels, centroid_classes;
    for (int i = 0; i < 12; ++i) labels.push_back(i % 3);
    for (int c = 0; c < 3; ++c) centroid_classes.insert(centroid_classes.end(), per_class, c);
    run(o, net, [=](const Mlp& m, bool grads) {
      const auto trace = forward(m, x);
      const auto& out = trace.output();
      const auto loss = ncm_representation_loss(out.leftCols(12), out.rightCols(3 * per_class), centroid_classes, 3,
                                                labels);
      ProbeResult r{loss.mean_loss, {}, with_trace(trace, loss.switch_margins)};
      if (grads) {
        Eigen::MatrixXd g(out.rows(), out.cols());
        g << loss.grad_representations, loss.grad_centroids;
        r.gradients = backward(m, trace, g).params;
        fault(r.gradients);
      }
      return r;
    });
  }
  {
    const Eigen::MatrixXd x = random_matrix(in, 12);
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) labels.push_back(i % 3);
    const Mlp head = make_mlp({dims.back(), 3}, derive_seed(config.seed, kGradStream, 3));
    run(Objective::softmax, net, [=](const Mlp& m, bool grads) {
      const auto trace = forward(m, x);
      const auto loss = softmax_xent(head, trace.output(), labels);
      ProbeResult r{loss.mean_loss, {}, rectifier_arguments(trace)};
      if (grads) {
        r.gradients = backward(m, trace, loss.representation_gradients).params;
        fault(r.gradients);
      }
      return r;
    });
  }
  return rows;
}

}  // namespace magnet
