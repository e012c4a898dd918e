#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "firesense/ops.hpp"
#include "firesense/rng.hpp"
#include "firesense/tensor.hpp"

namespace firesense {

/// How a forward pass treats the stochastic and stateful layers.
/// MC-Dropout inference is {bn_training = false, dropout_active = true}.
struct ForwardMode {
  bool bn_training = false;
  bool dropout_active = false;
  Pcg32* rng = nullptr;

  static ForwardMode train(Pcg32* rng) { return {true, true, rng}; }
  static ForwardMode eval() { return {}; }
  static ForwardMode mc_dropout(Pcg32* rng) { return {false, true, rng}; }
};

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, Tensor<T>& param)>;
template <typename T>
using BufferVisitor = std::function<void(const std::string& name, std::vector<T>& buffer)>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

inline constexpr double kReluGain = 1.4142135623730951;
inline constexpr double kLinearGain = 1.0;

template <typename T>
struct Conv2d {
  std::string name;
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]
  int stride = 1;
  int padding = 0;

  /// Kaiming-uniform fan-in weights, bound gain * sqrt(3 / fan_in), zero bias,
  /// "same" padding (k-1)/2. The default gain suits a following ReLU; use
  /// kLinearGain when the output is linear or feeds a sigmoid.
  static Conv2d make(std::string name, int cin, int cout, int k, int stride, Pcg32& rng,
                     double gain = kReluGain);

  Tensor<T> operator()(const Tensor<T>& x) const;

  int in_channels() const { return static_cast<int>(weight.dim(1)); }
  int out_channels() const { return static_cast<int>(weight.dim(0)); }
  int kernel() const { return static_cast<int>(weight.dim(2)); }

  void visit(const std::string& prefix, const ParamVisitor<T>& v);
};

template <typename T>
struct BatchNorm2d {
  std::string name;
  Tensor<T> gamma;
  Tensor<T> beta;
  RunningStats<T> stats;

  static BatchNorm2d make(std::string name, int channels);

  Tensor<T> operator()(const Tensor<T>& x, const ForwardMode& mode);

  void visit(const std::string& prefix, const ParamVisitor<T>& v);
  void visit_buffers(const std::string& prefix, const BufferVisitor<T>& v);
};

/// conv -> batchnorm -> relu
template <typename T>
struct ConvBnRelu {
  std::string name;
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  static ConvBnRelu make(std::string name, int cin, int cout, int k, int stride, Pcg32& rng);
  Tensor<T> operator()(const Tensor<T>& x, const ForwardMode& mode);
  void visit(const std::string& prefix, const ParamVisitor<T>& v);
  void visit_buffers(const std::string& prefix, const BufferVisitor<T>& v);
};

/// Post-activation residual block:
///   relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x))
/// conv1 has kernel `k_first` and the block stride; conv2 is 3x3. The shortcut
/// is the identity, or a 1x1 conv + batchnorm when channels or stride change.
template <typename T>
struct ResidualBlock {
  std::string name;
  Conv2d<T> conv1;
  BatchNorm2d<T> bn1;
  Conv2d<T> conv2;
  BatchNorm2d<T> bn2;
  bool projection = false;
  Conv2d<T> proj;
  BatchNorm2d<T> proj_bn;

  static ResidualBlock make(std::string name, int cin, int cout, int k_first, int stride, Pcg32& rng);
  Tensor<T> operator()(const Tensor<T>& x, const ForwardMode& mode);
  void visit(const std::string& prefix, const ParamVisitor<T>& v);
  void visit_buffers(const std::string& prefix, const BufferVisitor<T>& v);
};

template <typename T>
struct CafimOutput {
  Tensor<T> fused;  // [N, 2C, H, W]
  Tensor<T> alpha;  // [N, 1, H, W]
};

/// Cross-attentive fusion of the fuel and weather branches:
///   alpha = sigmoid(att2(relu(att1([Wf * fuel ; Ww * weather]))))
///   fused = [alpha * fuel ; (1 - alpha) * weather]
/// Projections keep C channels, att1 maps 2C -> C, att2 maps C -> 1. No batchnorm.
template <typename T>
struct Cafim {
  std::string name;
  Conv2d<T> proj_fuel;
  Conv2d<T> proj_weather;
  Conv2d<T> att1;
  Conv2d<T> att2;

  static Cafim make(std::string name, int channels, Pcg32& rng);
  CafimOutput<T> operator()(const Tensor<T>& fuel, const Tensor<T>& weather) const;
  void visit(const std::string& prefix, const ParamVisitor<T>& v);
};

/// upsample x2 (bilinear) -> concat skip -> two conv3x3+bn+relu.
template <typename T>
struct DecoderBlock {
  std::string name;
  ConvBnRelu<T> conv1;
  ConvBnRelu<T> conv2;

  static DecoderBlock make(std::string name, int cin, int cskip, int cout, Pcg32& rng);
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& skip, const ForwardMode& mode);
  void visit(const std::string& prefix, const ParamVisitor<T>& v);
  void visit_buffers(const std::string& prefix, const BufferVisitor<T>& v);
};

}  // namespace firesense
