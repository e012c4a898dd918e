#include "firesense/losses.hpp"

#include <cmath>
#include <string>

#include "firesense/error.hpp"
#include "firesense/ops.hpp"

namespace firesense {

std::vector<std::uint8_t> valid_mask(std::span<const std::int8_t> y) {
  std::vector<std::uint8_t> m(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) m[i] = y[i] != -1 ? 1 : 0;
  return m;
}

template <typename T>
std::vector<std::uint8_t> valid_mask(std::span<const T> targets) {
  std::vector<std::uint8_t> m(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) m[i] = targets[i] >= T(0) ? 1 : 0;
  return m;
}

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid_d(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct Layout {
  std::size_t samples;
  std::size_t pixels;
};

template <typename T>
Layout layout_of(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                 const char* op) {
  const auto n = static_cast<std::size_t>(logits.numel());
  if (targets.size() != n || mask.size() != n) {
    throw DimensionError(std::string(op) + ": logits have " + std::to_string(n) + " elements, targets " +
                         std::to_string(targets.size()) + ", mask " + std::to_string(mask.size()));
  }
  const std::size_t samples = logits.rank() == 4 ? static_cast<std::size_t>(logits.dim(0)) : 1;
  return {samples, samples == 0 ? 0 : n / samples};
}

// Per-sample loss value and d(loss)/d(z) for each pixel of that sample.
struct SampleLoss {
  double value = 0.0;
  std::vector<double> dz;
};

template <typename T, typename F>
Tensor<T> masked_loss(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                      LossFlags* flags, const char* op, F per_sample) {
  const Layout lay = layout_of(logits, targets, mask, op);
  const auto z = logits.values();
  std::vector<double> grad(z.size(), 0.0);
  double total = 0.0;
  const double inv_n = lay.samples ? 1.0 / static_cast<double>(lay.samples) : 0.0;
  for (std::size_t s = 0; s < lay.samples; ++s) {
    const std::size_t off = s * lay.pixels;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < lay.pixels; ++i) valid += mask[off + i] ? 1 : 0;
    if (valid == 0) {
      if (flags) ++flags->empty_samples;
      continue;
    }
    const SampleLoss sl = per_sample(z.subspan(off, lay.pixels), targets.subspan(off, lay.pixels),
                                     mask.subspan(off, lay.pixels), valid);
    total += sl.value * inv_n;
    for (std::size_t i = 0; i < lay.pixels; ++i) grad[off + i] = sl.dz[i] * inv_n;
  }
  if (!std::isfinite(total)) throw NumericalError(std::string(op) + ": loss is not finite");
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total));
  if (logits.requires_grad() && grad_enabled()) {
    auto& node = *out.node();
    node.op = op;
    node.requires_grad = true;
    node.parents.push_back(logits.node());
    node.backward = [grad = std::move(grad)](Node<T>& self) {
      auto& p = self.parents[0];
      auto& g = p->grad_buffer();
      const double up = static_cast<double>(self.grad[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += static_cast<T>(up * grad[i]);
    };
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> wbce_loss(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                    double pos_weight, LossFlags* flags) {
  return masked_loss<T>(logits, targets, mask, flags, "wbce",
                        [pos_weight](std::span<const T> z, std::span<const T> t, std::span<const std::uint8_t> m,
                                     std::size_t valid) {
                          SampleLoss out;
                          out.dz.assign(z.size(), 0.0);
                          const double inv = 1.0 / static_cast<double>(valid);
                          for (std::size_t i = 0; i < z.size(); ++i) {
                            if (!m[i]) continue;
                            const double zi = z[i], ti = t[i];
                            const double s = sigmoid_d(zi);
                            out.value += (pos_weight * ti * softplus(-zi) + (1.0 - ti) * softplus(zi)) * inv;
                            out.dz[i] = (-pos_weight * ti * (1.0 - s) + (1.0 - ti) * s) * inv;
                          }
                          return out;
                        });
}

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                    double eps, LossFlags* flags) {
  return masked_loss<T>(logits, targets, mask, flags, "dice",
                        [eps](std::span<const T> z, std::span<const T> t, std::span<const std::uint8_t> m,
                              std::size_t) {
                          SampleLoss out;
                          out.dz.assign(z.size(), 0.0);
                          std::vector<double> p(z.size(), 0.0);
                          double sp = 0.0, st = 0.0, inter = 0.0;
                          for (std::size_t i = 0; i < z.size(); ++i) {
                            if (!m[i]) continue;
                            p[i] = sigmoid_d(z[i]);
                            sp += p[i];
                            st += t[i];
                            inter += p[i] * t[i];
                          }
                          const double num = 2.0 * inter + eps;
                          const double den = sp + st + eps;
                          out.value = 1.0 - num / den;
                          for (std::size_t i = 0; i < z.size(); ++i) {
                            if (!m[i]) continue;
                            const double dp = -(2.0 * t[i] * den - num) / (den * den);
                            out.dz[i] = dp * p[i] * (1.0 - p[i]);
                          }
                          return out;
                        });
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                     double gamma, LossFlags* flags) {
  if (gamma < 0) throw ConfigError("focal gamma must be >= 0");
  return masked_loss<T>(logits, targets, mask, flags, "focal",
                        [gamma](std::span<const T> z, std::span<const T> t, std::span<const std::uint8_t> m,
                                std::size_t valid) {
                          SampleLoss out;
                          out.dz.assign(z.size(), 0.0);
                          const double inv = 1.0 / static_cast<double>(valid);
                          for (std::size_t i = 0; i < z.size(); ++i) {
                            if (!m[i]) continue;
                            const double zi = z[i], ti = t[i];
                            const double s = sigmoid_d(zi);
                            const double bce = ti * softplus(-zi) + (1.0 - ti) * softplus(zi);
                            const bool fire = ti >= 0.5;
                            // modulating factor (1 - p_t)^gamma and its derivative in z
                            const double q = fire ? 1.0 - s : s;
                            const double mod = std::pow(q, gamma);
                            const double dmod = fire ? -gamma * mod * s : gamma * mod * (1.0 - s);
                            out.value += mod * bce * inv;
                            out.dz[i] = (dmod * bce + mod * (s - ti)) * inv;
                          }
                          return out;
                        });
}

template <typename T>
CompositeLoss<T> composite_loss(const Tensor<T>& logits, std::span<const T> targets,
                                std::span<const std::uint8_t> mask, const LossOptions& opt) {
  CompositeLoss<T> out;
  out.wbce = wbce_loss(logits, targets, mask, opt.pos_weight, &out.flags);
  LossFlags ignored;
  out.dice = dice_loss(logits, targets, mask, opt.dice_eps, &ignored);
  out.focal = focal_loss(logits, targets, mask, opt.gamma, &ignored);
  out.total = add(add(mul_scalar(out.wbce, static_cast<T>(opt.w_wbce)), mul_scalar(out.dice, static_cast<T>(opt.w_dice))),
                  mul_scalar(out.focal, static_cast<T>(opt.w_focal)));
  return out;
}

#define FIRESENSE_INSTANTIATE_LOSSES(T)                                                                          \
  template std::vector<std::uint8_t> valid_mask<T>(std::span<const T>);                                          \
  template Tensor<T> wbce_loss(const Tensor<T>&, std::span<const T>, std::span<const std::uint8_t>, double,       \
                               LossFlags*);                                                                      \
  template Tensor<T> dice_loss(const Tensor<T>&, std::span<const T>, std::span<const std::uint8_t>, double,       \
                               LossFlags*);                                                                      \
  template Tensor<T> focal_loss(const Tensor<T>&, std::span<const T>, std::span<const std::uint8_t>, double,      \
                                LossFlags*);                                                                     \
  template CompositeLoss<T> composite_loss(const Tensor<T>&, std::span<const T>, std::span<const std::uint8_t>, \
                                           const LossOptions&);

FIRESENSE_INSTANTIATE_LOSSES(float)
FIRESENSE_INSTANTIATE_LOSSES(double)

}  // namespace firesense
