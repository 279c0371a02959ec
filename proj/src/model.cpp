#include "magnet/model.hpp"

#include "magnet/binary_io.hpp"

#include <random>

namespace magnet {

Parameters Parameters::zeros_like(const std::vector<int>& dims) {
  Parameters p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p.weights.push_back(Eigen::MatrixXd::Zero(dims[l + 1], dims[l]));
    p.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
  }
  return p;
}

Index Parameters::size() const {
  Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

double& Parameters::coeff(Index i) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (i < weights[l].size()) return weights[l].data()[i];
    i -= weights[l].size();
    if (i < biases[l].size()) return biases[l](i);
    i -= biases[l].size();
  }
  throw ContractError("parameter coordinate out of range");
}

double Parameters::coeff(Index i) const { return const_cast<Parameters&>(*this).coeff(i); }

bool Parameters::same_shape(const Parameters& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols())
      return false;
    if (biases[l].size() != other.biases[l].size()) return false;
  }
  return true;
}

bool Parameters::operator==(const Parameters& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t l = 0; l < weights.size(); ++l)
    if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) return false;
  return true;
}

bool Mlp::operator==(const Mlp& other) const {
  return dims == other.dims && params == other.params && velocity == other.velocity &&
         version == other.version;
}

Mlp make_mlp(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("model needs at least input and output dimensions");
  for (int d : dims)
    if (d < 1) throw ConfigError("layer dimensions must be positive");
  Mlp model;
  model.dims = dims;
  model.params = Parameters::zeros_like(dims);
  model.velocity = Parameters::zeros_like(dims);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double s = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    std::uniform_real_distribution<double> uniform(-s, s);
    auto& w = model.params.weights[l];
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng);
  }
  return model;
}

ForwardTrace forward(const Mlp& model, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != model.input_dim())
    throw ShapeError("input dimension " + std::to_string(inputs.rows()) + " does not match model input " +
                     std::to_string(model.input_dim()));
  ForwardTrace trace;
  trace.model_version = model.version;
  trace.dims = model.dims;
  trace.post.push_back(inputs);
  const std::size_t layers = model.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = model.params.weights[l] * trace.post.back();
    z.colwise() += model.params.biases[l];
    trace.post.push_back(l + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z);
    trace.pre.push_back(std::move(z));
  }
  return trace;
}

Eigen::MatrixXd embed(const Mlp& model, const Eigen::MatrixXd& inputs) {
  return forward(model, inputs).output();
}

Gradients backward(const Mlp& model, const ForwardTrace& trace, const Eigen::MatrixXd& output_grads) {
  if (trace.dims != model.dims || trace.model_version != model.version)
    throw ContractError("forward trace does not belong to the current model state");
  const auto& out = trace.output();
  if (output_grads.rows() != out.rows() || output_grads.cols() != out.cols())
    throw ShapeError("representation gradients do not match representations");

  Gradients grads;
  grads.params = Parameters::zeros_like(model.dims);
  Eigen::MatrixXd delta = output_grads;
  for (std::size_t l = model.layer_count(); l-- > 0;) {
    grads.params.weights[l].noalias() = delta * trace.post[l].transpose();
    grads.params.biases[l] = delta.rowwise().sum();
    Eigen::MatrixXd upstream = model.params.weights[l].transpose() * delta;
    if (l > 0) {
      delta = (trace.pre[l - 1].array() > 0.0).select(upstream, 0.0);
    } else {
      grads.input_grad = std::move(upstream);
    }
  }
  return grads;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(anneal_factor > 0.0 && anneal_factor <= 1.0)) throw ConfigError("anneal factor must lie in (0, 1]");
  if (epoch_length < 1) throw ConfigError("epoch length must be >= 1");
}

double effective_learning_rate(const OptimizerConfig& config, long iteration) {
  const long epochs = iteration / config.epoch_length;
  return config.learning_rate * std::pow(config.anneal_factor, static_cast<double>(epochs));
}

void sgd_step(Mlp& model, const Parameters& gradients, const OptimizerConfig& config, long iteration) {
  if (!gradients.same_shape(model.params)) throw ShapeError("gradients do not match parameters");
  const double rate = effective_learning_rate(config, iteration);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    auto& vw = model.velocity.weights[l];
    auto& vb = model.velocity.biases[l];
    vw = config.momentum * vw - rate * gradients.weights[l];
    vb = config.momentum * vb - rate * gradients.biases[l];
    model.params.weights[l] += vw;
    model.params.biases[l] += vb;
  }
  ++model.version;
}

namespace {
constexpr char kModelMagic[9] = "MGNTMLP1";

void write_parameters(std::ostream& out, const Parameters& p) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    io::write_matrix(out, p.weights[l]);
    io::write_matrix(out, p.biases[l]);
  }
}

void read_parameters(std::istream& in, Parameters& p) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    io::read_matrix(in, p.weights[l]);
    Eigen::MatrixXd b(p.biases[l].size(), 1);
    io::read_matrix(in, b);
    p.biases[l] = b.col(0);
  }
}
}  // namespace

void save_model(std::ostream& out, const Mlp& model) {
  out.write(kModelMagic, 8);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.dims.size()));
  for (int d : model.dims) io::write_pod<std::int32_t>(out, d);
  write_parameters(out, model.params);
  write_parameters(out, model.velocity);
  io::write_pod<std::uint64_t>(out, model.version);
}

Mlp load_model(std::istream& in) {
  io::expect_magic(in, kModelMagic);
  const auto n = io::read_pod<std::uint32_t>(in);
  if (n < 2 || n > 64) throw ParseError("implausible layer count in model file");
  Mlp model;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto d = io::read_pod<std::int32_t>(in);
    if (d < 1) throw ParseError("non-positive layer dimension in model file");
    model.dims.push_back(d);
  }
  model.params = Parameters::zeros_like(model.dims);
  model.velocity = Parameters::zeros_like(model.dims);
  read_parameters(in, model.params);
  read_parameters(in, model.velocity);
  model.version = io::read_pod<std::uint64_t>(in);
  return model;
}

}  // namespace magnet
