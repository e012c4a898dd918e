#include "firesense/nn.hpp"

#include <cmath>

namespace firesense {

template <typename T>
Conv2d<T> Conv2d<T>::make(std::string name, int cin, int cout, int k, int stride, Pcg32& rng, double gain) {
  if (cin < 1 || cout < 1) throw ConfigError("conv '" + name + "': channel counts must be >= 1");
  Conv2d c;
  c.name = std::move(name);
  c.stride = stride;
  c.padding = (k - 1) / 2;
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(cin * k * k));
  std::vector<T> w(static_cast<std::size_t>(cout) * cin * k * k);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  c.weight = Tensor<T>(Shape{cout, cin, k, k}, std::move(w));
  c.bias = Tensor<T>::zeros(Shape{cout});
  c.weight.set_requires_grad();
  c.bias.set_requires_grad();
  return c;
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  FlopScope scope(name);
  return conv2d(x, weight, bias, stride, padding);
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, const ParamVisitor<T>& v) {
  v(join_name(prefix, name + ".weight"), weight);
  v(join_name(prefix, name + ".bias"), bias);
}

template <typename T>
BatchNorm2d<T> BatchNorm2d<T>::make(std::string name, int channels) {
  BatchNorm2d b;
  b.name = std::move(name);
  b.gamma = Tensor<T>::ones(Shape{channels});
  b.beta = Tensor<T>::zeros(Shape{channels});
  b.gamma.set_requires_grad();
  b.beta.set_requires_grad();
  b.stats = RunningStats<T>(static_cast<std::size_t>(channels));
  return b;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::operator()(const Tensor<T>& x, const ForwardMode& mode) {
  FlopScope scope(name);
  return batch_norm(x, gamma, beta, stats, mode.bn_training);
}

template <typename T>
void BatchNorm2d<T>::visit(const std::string& prefix, const ParamVisitor<T>& v) {
  v(join_name(prefix, name + ".gamma"), gamma);
  v(join_name(prefix, name + ".beta"), beta);
}

template <typename T>
void BatchNorm2d<T>::visit_buffers(const std::string& prefix, const BufferVisitor<T>& v) {
  v(join_name(prefix, name + ".running_mean"), stats.mean);
  v(join_name(prefix, name + ".running_var"), stats.var);
}

template <typename T>
ConvBnRelu<T> ConvBnRelu<T>::make(std::string name, int cin, int cout, int k, int stride, Pcg32& rng) {
  ConvBnRelu u;
  u.name = std::move(name);
  u.conv = Conv2d<T>::make("conv", cin, cout, k, stride, rng);
  u.bn = BatchNorm2d<T>::make("bn", cout);
  return u;
}

template <typename T>
Tensor<T> ConvBnRelu<T>::operator()(const Tensor<T>& x, const ForwardMode& mode) {
  FlopScope scope(name);
  return relu(bn(conv(x), mode));
}

template <typename T>
void ConvBnRelu<T>::visit(const std::string& prefix, const ParamVisitor<T>& v) {
  const auto p = join_name(prefix, name);
  conv.visit(p, v);
  bn.visit(p, v);
}

template <typename T>
void ConvBnRelu<T>::visit_buffers(const std::string& prefix, const BufferVisitor<T>& v) {
  bn.visit_buffers(join_name(prefix, name), v);
}

template <typename T>
ResidualBlock<T> ResidualBlock<T>::make(std::string name, int cin, int cout, int k_first, int stride,
                                        Pcg32& rng) {
  ResidualBlock r;
  r.name = std::move(name);
  r.conv1 = Conv2d<T>::make("conv1", cin, cout, k_first, stride, rng);
  r.bn1 = BatchNorm2d<T>::make("bn1", cout);
  r.conv2 = Conv2d<T>::make("conv2", cout, cout, 3, 1, rng);
  r.bn2 = BatchNorm2d<T>::make("bn2", cout);
  r.projection = cin != cout || stride != 1;
  if (r.projection) {
    r.proj = Conv2d<T>::make("proj", cin, cout, 1, stride, rng);
    r.proj_bn = BatchNorm2d<T>::make("proj_bn", cout);
  }
  return r;
}

template <typename T>
Tensor<T> ResidualBlock<T>::operator()(const Tensor<T>& x, const ForwardMode& mode) {
  FlopScope scope(name);
  Tensor<T> h = relu(bn1(conv1(x), mode));
  h = bn2(conv2(h), mode);
  const Tensor<T> shortcut = projection ? proj_bn(proj(x), mode) : x;
  return relu(add(h, shortcut));
}

template <typename T>
void ResidualBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& v) {
  const auto p = join_name(prefix, name);
  conv1.visit(p, v);
  bn1.visit(p, v);
  conv2.visit(p, v);
  bn2.visit(p, v);
  if (projection) {
    proj.visit(p, v);
    proj_bn.visit(p, v);
  }
}

template <typename T>
void ResidualBlock<T>::visit_buffers(const std::string& prefix, const BufferVisitor<T>& v) {
  const auto p = join_name(prefix, name);
  bn1.visit_buffers(p, v);
  bn2.visit_buffers(p, v);
  if (projection) proj_bn.visit_buffers(p, v);
}

template <typename T>
Cafim<T> Cafim<T>::make(std::string name, int channels, Pcg32& rng) {
  Cafim c;
  c.name = std::move(name);
  c.proj_fuel = Conv2d<T>::make("proj_fuel", channels, channels, 1, 1, rng, kLinearGain);
  c.proj_weather = Conv2d<T>::make("proj_weather", channels, channels, 1, 1, rng, kLinearGain);
  c.att1 = Conv2d<T>::make("att1", 2 * channels, channels, 3, 1, rng);
  c.att2 = Conv2d<T>::make("att2", channels, 1, 3, 1, rng, kLinearGain);
  return c;
}

template <typename T>
CafimOutput<T> Cafim<T>::operator()(const Tensor<T>& fuel, const Tensor<T>& weather) const {
  if (fuel.shape() != weather.shape()) {
    throw DimensionError("cafim: branch shapes differ: " + to_string(fuel.shape()) + " vs " +
                         to_string(weather.shape()));
  }
  FlopScope scope(name);
  const Tensor<T> projected = concat_channels(proj_fuel(fuel), proj_weather(weather));
  Tensor<T> alpha = sigmoid(att2(relu(att1(projected))));
  const Tensor<T> complement = rsub_scalar(T(1), alpha);
  Tensor<T> fused =
      concat_channels(mul_channel_broadcast(fuel, alpha), mul_channel_broadcast(weather, complement));
  return {std::move(fused), std::move(alpha)};
}

template <typename T>
void Cafim<T>::visit(const std::string& prefix, const ParamVisitor<T>& v) {
  const auto p = join_name(prefix, name);
  proj_fuel.visit(p, v);
  proj_weather.visit(p, v);
  att1.visit(p, v);
  att2.visit(p, v);
}

template <typename T>
DecoderBlock<T> DecoderBlock<T>::make(std::string name, int cin, int cskip, int cout, Pcg32& rng) {
  DecoderBlock d;
  d.name = std::move(name);
  d.conv1 = ConvBnRelu<T>::make("conv1", cin + cskip, cout, 3, 1, rng);
  d.conv2 = ConvBnRelu<T>::make("conv2", cout, cout, 3, 1, rng);
  return d;
}

template <typename T>
Tensor<T> DecoderBlock<T>::operator()(const Tensor<T>& x, const Tensor<T>& skip,
                                      const ForwardMode& mode) {
  FlopScope scope(name);
  Tensor<T> up;
  {
    FlopScope up_scope("upsample");
    up = upsample_bilinear2x(x);
  }
  const auto& us = up.shape();
  const auto& ss = skip.shape();
  if (us.size() != ss.size() || us.size() < 2 || us[us.size() - 1] != ss[ss.size() - 1] ||
      us[us.size() - 2] != ss[ss.size() - 2]) {
    throw DimensionError("decoder '" + name + "': upsampled " + to_string(us) +
                         " does not match skip " + to_string(ss));
  }
  return conv2(conv1(concat_channels(up, skip), mode), mode);
}

template <typename T>
void DecoderBlock<T>::visit(const std::string& prefix, const ParamVisitor<T>& v) {
  const auto p = join_name(prefix, name);
  conv1.visit(p, v);
  conv2.visit(p, v);
}

template <typename T>
void DecoderBlock<T>::visit_buffers(const std::string& prefix, const BufferVisitor<T>& v) {
  const auto p = join_name(prefix, name);
  conv1.visit_buffers(p, v);
  conv2.visit_buffers(p, v);
}

template struct Conv2d<float>;
template struct Conv2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template struct ConvBnRelu<float>;
template struct ConvBnRelu<double>;
template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template struct Cafim<float>;
template struct Cafim<double>;
template struct DecoderBlock<float>;
template struct DecoderBlock<double>;

}  // namespace firesense
