#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "firesense/tensor.hpp"

namespace firesense {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // worst coordinate
  std::size_t tensor_index = 0;
  std::size_t flat_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // coordinates left out because x - step and x + step fall on different
  // linear pieces of a ReLU or max-pool (the central difference is not an
  // estimate of the derivative there)
  std::size_t skipped = 0;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of the scalar `f()` against central
/// differences for every coordinate of every tensor in `wrt` (or an evenly
/// strided subset of at most `max_coords_per_tensor` coordinates when non-zero).
/// `f` must read the leaves in `wrt`; their values are perturbed in place and
/// restored. Throws NumericalError if f is not finite.
///
/// With `skip_branch_changes`, a coordinate is skipped when the evaluations at
/// x - step, x and x + step do not share one BranchMonitor fingerprint.
GradCheckResult gradient_check(const std::function<Tensor<double>()>& f,
                               std::vector<Tensor<double>> wrt, double step = 1e-3,
                               std::size_t max_coords_per_tensor = 0, bool skip_branch_changes = true);

/// Single-input form: f(x) scalar.
GradCheckResult gradient_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                               Tensor<double> x, double step = 1e-3);

}  // namespace firesense
