#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "firesense/tensor.hpp"

namespace firesense {

using NamedParams = std::vector<std::pair<std::string, Tensor<float>>>;

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when > 0
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam; with weight_decay > 0 the parameter is additionally
/// shrunk by lr * weight_decay * param before the moment update is applied.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  /// Parameters without an accumulated gradient are treated as having a zero
  /// gradient. Throws NumericalError naming the parameter if any gradient is
  /// not finite; nothing is updated in that case.
  void step(NamedParams& params);

  const AdamState& state() const { return state_; }
  void set_state(AdamState s) { state_ = std::move(s); }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

/// eta_min + (lr_max - eta_min) * (1 + cos(pi * epoch / max_epochs)) / 2.
double cosine_lr(int epoch, int max_epochs, double lr_max, double eta_min);

/// Global L2 norm over every gradient.
double grad_norm(const NamedParams& params);

/// Scales all gradients by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_gradients(NamedParams& params, double max_norm);

}  // namespace firesense
