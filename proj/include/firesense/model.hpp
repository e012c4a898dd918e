#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "firesense/nn.hpp"

namespace firesense {

enum class Arch { FireSenseNet, BaselineCNN, FireSenseNetConcat };

std::string to_string(Arch arch);
/// Accepts "firesensenet", "baseline", "baselinecnn", "concat", "firesensenet-concat".
Arch parse_arch(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::FireSenseNet;
  double width_mult = 1.0;
  double dropout_p = 0.3;
  int fuel_channels = 4;
  int weather_channels = 8;

  int input_channels() const { return fuel_channels + weather_channels; }
  /// base * width_mult, required to be an integer >= 1.
  int scaled(int base) const;
  void validate() const;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;  // [N, 1, H, W], pre-sigmoid
  // Per encoder scale (full, 1/2, 1/4 resolution); empty for BaselineCNN.
  std::vector<Tensor<T>> alphas;
  std::vector<Tensor<T>> fuel_features;
  std::vector<Tensor<T>> weather_features;
  std::vector<Tensor<T>> fused;
};

/// Dual-branch encoder (fuel 3x3 residual stages, weather stages opening with
/// 5x5), fused at three scales by CAFIM (or plain concatenation), a stride-2
/// bottleneck at 1/8 resolution and a three-block U-Net decoder.
template <typename T>
struct DualBranchNet {
  bool use_cafim = true;
  std::vector<ResidualBlock<T>> fuel;
  std::vector<ResidualBlock<T>> weather;
  std::vector<Cafim<T>> cafim;
  ConvBnRelu<T> down;
  ResidualBlock<T> bottleneck;
  std::vector<DecoderBlock<T>> decoder;
  Conv2d<T> head;
};

/// Single-stream encoder-decoder: three dual-conv stages with max-pooling, a
/// dual-conv bottleneck, bilinear-upsampling decoder with concatenated skips.
template <typename T>
struct BaselineNet {
  std::vector<std::pair<ConvBnRelu<T>, ConvBnRelu<T>>> encoder;
  std::pair<ConvBnRelu<T>, ConvBnRelu<T>> bottleneck;
  std::vector<DecoderBlock<T>> decoder;
  Conv2d<T> head;
};

template <typename T>
class Model {
 public:
  Model(ModelConfig config, std::variant<DualBranchNet<T>, BaselineNet<T>> net)
      : config_(std::move(config)), net_(std::move(net)) {}

  const ModelConfig& config() const { return config_; }

  /// x: [N, 12, H, W] (or [12, H, W]) with H, W divisible by 8.
  ForwardResult<T> forward(const Tensor<T>& x, const ForwardMode& mode);

  void for_each_parameter(const ParamVisitor<T>& v);
  void for_each_buffer(const BufferVisitor<T>& v);

  /// Parameter handles in a stable order (they share storage with the model).
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters();
  void zero_grad();

  DualBranchNet<T>* dual_branch() { return std::get_if<DualBranchNet<T>>(&net_); }
  BaselineNet<T>* baseline() { return std::get_if<BaselineNet<T>>(&net_); }

 private:
  ModelConfig config_;
  std::variant<DualBranchNet<T>, BaselineNet<T>> net_;
};

/// Deterministic construction: same config and seed give bitwise-identical parameters.
template <typename T>
Model<T> build(const ModelConfig& config, std::uint64_t seed);

/// Copies parameters and running statistics by name (shapes must agree).
template <typename S, typename D>
void copy_state(Model<S>& src, Model<D>& dst);

struct LayerCount {
  std::string layer;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct CountReport {
  std::vector<LayerCount> layers;
  std::int64_t total_params = 0;
  std::int64_t total_flops = 0;
};

/// Closed forms used by the counters.
constexpr std::int64_t conv_param_count(std::int64_t k, std::int64_t cin, std::int64_t cout, bool bias = true) {
  return k * k * cin * cout + (bias ? cout : 0);
}
constexpr std::int64_t conv_flop_count(std::int64_t k, std::int64_t cin, std::int64_t cout, std::int64_t hout,
                                       std::int64_t wout) {
  return 2 * k * k * cin * cout * hout * wout;
}

/// Parameter count of any layer that exposes visit(prefix, visitor).
template <typename Layer>
std::int64_t count_layer_params(Layer& layer) {
  std::int64_t n = 0;
  layer.visit("", [&](const std::string&, auto& t) { n += t.numel(); });
  return n;
}

/// FLOPs recorded while `forward` runs (same cost model as count_flops).
std::int64_t count_forward_flops(const std::function<void()>& forward);

/// Parameters grouped per layer (name without the trailing ".weight", ".gamma", ...).
CountReport count_params(Model<float>& model);

/// FLOPs of one forward pass on a single H x W input, grouped per layer. One
/// multiply-accumulate counts as 2 FLOPs; elementwise ops count their output
/// size; bilinear upsampling counts 8 per output element.
CountReport count_flops(Model<float>& model, int height = 64, int width = 64);

}  // namespace firesense
