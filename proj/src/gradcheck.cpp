#include "magnet/gradcheck.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace magnet {

std::vector<double> rectifier_arguments(const ForwardTrace& trace) {
  std::vector<double> out;
  for (std::size_t l = 0; l + 1 < trace.pre.size(); ++l)
    out.insert(out.end(), trace.pre[l].data(), trace.pre[l].data() + trace.pre[l].size());
  return out;
}

namespace {

// True when the perturbed kink arguments cross a kink, or move one that
// already sits within `margin` of it.
bool crosses_kink(const std::vector<double>& base, const std::vector<double>& moved, double margin) {
  if (base.size() != moved.size()) return true;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if ((base[i] > 0.0) != (moved[i] > 0.0)) return true;
    if (std::abs(base[i]) < margin && moved[i] != base[i]) return true;
  }
  return false;
}

}  // namespace

GradCheckReport grad_check(const Mlp& model, const LossProbe& probe, const GradCheckOptions& options) {
  const ProbeResult base = probe(model, true);
  if (!base.gradients.same_shape(model.params)) throw ShapeError("probe returned mis-shaped gradients");

  const Index total = model.params.size();
  std::vector<Index> coords(static_cast<std::size_t>(total));
  std::iota(coords.begin(), coords.end(), Index{0});
  const Index wanted = std::max<Index>(options.samples, 200);
  if (wanted < total) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(wanted));
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  Mlp probe_model = model;
  for (Index i : coords) {
    const double original = probe_model.params.coeff(i);
    probe_model.params.coeff(i) = original + options.step;
    const ProbeResult plus = probe(probe_model, false);
    probe_model.params.coeff(i) = original - options.step;
    const ProbeResult minus = probe(probe_model, false);
    probe_model.params.coeff(i) = original;

    if (crosses_kink(base.kinks, plus.kinks, options.kink_margin) ||
        crosses_kink(base.kinks, minus.kinks, options.kink_margin)) {
      ++report.skipped;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * options.step);
    const double analytic = base.gradients.coeff(i);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    report.max_relative_error = std::max(report.max_relative_error, std::abs(numeric - analytic) / scale);
    ++report.checked;
  }
  report.passed = report.checked > 0 && report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace magnet
