#include "firesense/optim.hpp"

#include <cmath>
#include <numbers>

#include "firesense/error.hpp"

namespace firesense {

void Adam::step(NamedParams& params) {
  if (state_.m.empty()) {
    for (auto& [name, p] : params) {
      state_.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
      state_.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
    }
  }
  if (state_.m.size() != params.size()) throw UsageError("Adam: parameter list changed between steps");
  for (auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter '" + name + "'");
    }
  }

  state_.step += 1;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].second;
    auto w = p.mutable_values();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    if (m.size() != w.size()) throw UsageError("Adam: shape of '" + params[k].first + "' changed");
    const bool has = p.has_grad();
    const auto g = has ? p.grad() : std::span<const float>{};
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = has ? static_cast<double>(g[i]) : 0.0;
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      double wi = w[i];
      if (cfg_.weight_decay > 0) wi -= cfg_.lr * cfg_.weight_decay * wi;
      wi -= cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
      w[i] = static_cast<float>(wi);
    }
  }
}

double cosine_lr(int epoch, int max_epochs, double lr_max, double eta_min) {
  if (max_epochs < 1 || epoch < 0 || epoch > max_epochs) {
    throw ConfigError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(max_epochs) + "]");
  }
  const double c = std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(max_epochs));
  return eta_min + 0.5 * (lr_max - eta_min) * (1.0 + c);
}

double grad_norm(const NamedParams& params) {
  double ss = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) ss += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(ss);
}

double clip_gradients(NamedParams& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const double scale = max_norm / norm;
    for (auto& [name, p] : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g = static_cast<float>(static_cast<double>(g) * scale);
    }
  }
  return norm;
}

}  // namespace firesense
