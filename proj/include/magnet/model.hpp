#pragma once

#include "magnet/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace magnet {

/// Weights and biases of an affine stack; also used for gradients and
/// velocity buffers. weights[l] is (dims[l+1] x dims[l]).
struct Parameters {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static Parameters zeros_like(const std::vector<int>& dims);

  Index size() const;
  /// Flat coordinate access: layer by layer, weights (column-major) then bias.
  double& coeff(Index i);
  double coeff(Index i) const;

  bool same_shape(const Parameters& other) const;
  bool operator==(const Parameters& other) const;
};

/// Affine + rectifier layers, identity on the output layer.
struct Mlp {
  std::vector<int> dims;  // [input, hidden..., representation]
  Parameters params;
  Parameters velocity;
  /// Bumped by every parameter update; forward traces record it.
  std::uint64_t version = 0;

  Index input_dim() const { return dims.front(); }
  Index output_dim() const { return dims.back(); }
  std::size_t layer_count() const { return dims.size() - 1; }

  bool operator==(const Mlp& other) const;
};

/// Uniform(-s, s) weights with s = sqrt(6 / (fan_in + fan_out)), zero biases,
/// zero velocity.
Mlp make_mlp(const std::vector<int>& dims, std::uint64_t seed);

/// Per-layer activations retained for the paired backward call.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;   // pre[l]: affine output of layer l
  std::vector<Eigen::MatrixXd> post;  // post[0] = inputs, post[l+1] = activation of layer l
  std::uint64_t model_version = 0;
  std::vector<int> dims;

  const Eigen::MatrixXd& output() const { return post.back(); }
};

/// Inputs are columns of `inputs` (input_dim x B).
ForwardTrace forward(const Mlp& model, const Eigen::MatrixXd& inputs);

/// Representations only; no trace retained.
Eigen::MatrixXd embed(const Mlp& model, const Eigen::MatrixXd& inputs);

struct Gradients {
  Parameters params;
  Eigen::MatrixXd input_grad;  // d(loss)/d(inputs), same shape as the inputs
};

/// Reverse-mode pass. `output_grads` is d(loss)/d(representation), one column
/// per example. Rectifier subgradient at 0 is 0.
Gradients backward(const Mlp& model, const ForwardTrace& trace, const Eigen::MatrixXd& output_grads);

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double anneal_factor = 1.0;
  long epoch_length = 1;

  void validate() const;
};

/// learning_rate * anneal_factor^floor(iteration / epoch_length)
double effective_learning_rate(const OptimizerConfig& config, long iteration);

/// velocity <- momentum * velocity - rate * gradient; parameter += velocity.
void sgd_step(Mlp& model, const Parameters& gradients, const OptimizerConfig& config, long iteration);

/// Binary layout: "MGNTMLP1", u32 layer count + 1, i32 dims, then per layer the
/// weight matrix row-major and the bias vector as little-endian f64, followed
/// by the velocity buffers in the same order and the u64 version.
void save_model(std::ostream& out, const Mlp& model);
Mlp load_model(std::istream& in);

}  // namespace magnet
