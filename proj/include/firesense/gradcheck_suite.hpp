#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace firesense {

struct GradcheckRow {
  std::string family;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t skipped = 0;  // coordinates straddling a ReLU/max-pool kink
  int trials = 0;
};

struct GradcheckSuiteOptions {
  std::uint64_t seed = 0;
  int trials = 10;           // random instances per primitive op
  bool full_model = true;    // FireSenseNet (width 0.25) + composite loss on 12x16x16
  double step = 1e-3;
  /// Evenly strided coordinates checked per parameter tensor of the full network (0 = all).
  std::size_t full_model_coords_per_tensor = 64;
};

/// Central-difference checks in 64-bit for every differentiable op, the
/// composite layers, the losses and the full network.
std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckSuiteOptions& opt = {});

}  // namespace firesense
