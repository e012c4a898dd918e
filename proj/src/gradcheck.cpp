#include "firesense/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "firesense/ops.hpp"

namespace firesense {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

struct Eval {
  double value;
  std::uint64_t branches;
};

Eval evaluate(const std::function<Tensor<double>()>& f) {
  NoGradGuard guard;
  BranchMonitor monitor;
  const double v = f().item();
  if (!std::isfinite(v)) throw NumericalError("gradient_check: f is not finite");
  return {v, monitor.fingerprint()};
}

}  // namespace

GradCheckResult gradient_check(const std::function<Tensor<double>()>& f,
                               std::vector<Tensor<double>> wrt, double step,
                               std::size_t max_coords_per_tensor, bool skip_branch_changes) {
  if (!(step > 0.0)) throw ConfigError("gradient_check: step must be positive");
  for (auto& t : wrt) {
    t.zero_grad();
    t.set_requires_grad(true);
  }
  std::uint64_t base_branches = 0;
  {
    BranchMonitor monitor;
    Tensor<double> loss = f();
    if (!std::isfinite(loss.item())) throw NumericalError("gradient_check: f is not finite");
    base_branches = monitor.fingerprint();
    loss.backward();
  }

  GradCheckResult result;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& t = wrt[ti];
    const std::size_t n = static_cast<std::size_t>(t.numel());
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    const std::size_t stride =
        (max_coords_per_tensor == 0 || n <= max_coords_per_tensor) ? 1 : (n + max_coords_per_tensor - 1) / max_coords_per_tensor;
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + step;
      const Eval fp = evaluate(f);
      values[i] = saved - step;
      const Eval fm = evaluate(f);
      values[i] = saved;
      if (skip_branch_changes && (fp.branches != base_branches || fm.branches != base_branches)) {
        ++result.skipped;
        continue;
      }
      const double numeric = (fp.value - fm.value) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      ++result.coordinates;
      if (err > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = err;
        result.tensor_index = ti;
        result.flat_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                               Tensor<double> x, double step) {
  return gradient_check([&f, &x] { return f(x); }, {x}, step);
}

}  // namespace firesense
