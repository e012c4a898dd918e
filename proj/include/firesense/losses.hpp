#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "firesense/tensor.hpp"

namespace firesense {

/// 1 where the label is known (y != -1).
std::vector<std::uint8_t> valid_mask(std::span<const std::int8_t> y);
/// Same, for float targets where unknown pixels carry a negative value.
template <typename T>
std::vector<std::uint8_t> valid_mask(std::span<const T> targets);

struct LossOptions {
  double pos_weight = 3.0;
  double dice_eps = 1.0;
  double gamma = 2.0;
  double w_wbce = 0.4;
  double w_dice = 0.3;
  double w_focal = 0.3;
};

// Every loss takes logits shaped [N, 1, H, W] (a tensor of any other rank is one
// sample) and targets/mask with one entry per logit. The loss is computed per
// sample over its valid pixels and averaged over the N samples. A sample with no
// valid pixel contributes 0 and is counted in LossFlags::empty_samples.

struct LossFlags {
  std::size_t empty_samples = 0;
};

template <typename T>
Tensor<T> wbce_loss(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                    double pos_weight = 3.0, LossFlags* flags = nullptr);

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                    double eps = 1.0, LossFlags* flags = nullptr);

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const T> targets, std::span<const std::uint8_t> mask,
                     double gamma = 2.0, LossFlags* flags = nullptr);

template <typename T>
struct CompositeLoss {
  Tensor<T> total;
  Tensor<T> wbce;   // unweighted terms, for logging
  Tensor<T> dice;
  Tensor<T> focal;
  LossFlags flags;
};

/// w_wbce * wbce + w_dice * dice + w_focal * focal.
template <typename T>
CompositeLoss<T> composite_loss(const Tensor<T>& logits, std::span<const T> targets,
                                std::span<const std::uint8_t> mask, const LossOptions& opt = {});

}  // namespace firesense
