#include "magnet/losses.hpp"

#include "magnet/index.hpp"

namespace magnet {

double magnet_full_objective(const ClusterIndex& index, const Eigen::MatrixXd& reps, const std::vector<int>& labels,
                             const MagnetConfig& config) {
  if (reps.cols() != index.example_count() || reps.rows() != index.dim())
    throw ShapeError("representations do not match the index");
  std::vector<int> center_class(static_cast<std::size_t>(index.cluster_count()));
  std::vector<char> empty(static_cast<std::size_t>(index.cluster_count()), 0);
  for (int c = 0; c < index.cluster_count(); ++c) {
    center_class[c] = index.cluster_class(c);
    empty[c] = index.members(c).empty();
  }
  return magnet_objective(reps, labels, index.centers(), center_class, index.assignments(), index.variance(), config,
                          empty);
}

SoftmaxLoss softmax_xent(const Mlp& head, const Eigen::MatrixXd& reps, const std::vector<int>& labels) {
  const auto trace = forward(head, reps);
  const auto xent = cross_entropy(trace.output(), labels);
  auto grads = backward(head, trace, xent.grad_logits);
  return {xent.mean_loss, std::move(grads.params), std::move(grads.input_grad)};
}

}  // namespace magnet
