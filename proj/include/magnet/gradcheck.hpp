#pragma once

#include "magnet/model.hpp"

#include <functional>
#include <vector>

namespace magnet {

/// One evaluation of a scalar loss over a fixed batch.
struct ProbeResult {
  double loss = 0.0;
  Parameters gradients;  // filled only when requested
  /// Arguments of every rectifier and hinge evaluated on the way; a sign
  /// change between perturbed evaluations marks a kink crossing.
  std::vector<double> kinks;
};

using LossProbe = std::function<ProbeResult(const Mlp& model, bool with_gradients)>;

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  Index samples = 256;  // at least 200 coordinates, or all when fewer exist
  double kink_margin = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  Index checked = 0;
  Index skipped = 0;
  bool passed = false;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-6) between analytic and central
/// difference gradients on a random coordinate subset.
GradCheckReport grad_check(const Mlp& model, const LossProbe& probe, const GradCheckOptions& options = {});

/// Rectifier pre-activations of a trace, flattened; feeds ProbeResult::kinks.
std::vector<double> rectifier_arguments(const ForwardTrace& trace);

}  // namespace magnet
