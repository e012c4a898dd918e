#include "firesense/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace firesense {

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::FireSenseNet:
      return "firesensenet";
    case Arch::BaselineCNN:
      return "baseline";
    case Arch::FireSenseNetConcat:
      return "firesensenet-concat";
  }
  return "unknown";
}

Arch parse_arch(const std::string& s) {
  std::string v;
  for (char c : s) v.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (v == "firesensenet" || v == "firesense" || v == "cafim") return Arch::FireSenseNet;
  if (v == "baseline" || v == "baselinecnn" || v == "baseline-cnn") return Arch::BaselineCNN;
  if (v == "concat" || v == "firesensenet-concat" || v == "firesensenetconcat") return Arch::FireSenseNetConcat;
  throw ConfigError("unknown architecture '" + s + "'");
}

int ModelConfig::scaled(int base) const {
  const double c = base * width_mult;
  const double r = std::round(c);
  if (std::abs(c - r) > 1e-9 || r < 1.0) {
    throw ConfigError("width_mult " + std::to_string(width_mult) + " gives non-integer channel count " +
                      std::to_string(c) + " for base width " + std::to_string(base));
  }
  return static_cast<int>(r);
}

void ModelConfig::validate() const {
  if (!(width_mult > 0.0)) throw ConfigError("width_mult must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must lie in [0, 1)");
  if (fuel_channels < 1 || weather_channels < 1) throw ConfigError("channel groups must be non-empty");
  for (int base : {16, 32, 64, 128, 256}) (void)scaled(base);
}

namespace {

template <typename T>
DualBranchNet<T> build_dual(const ModelConfig& cfg, Pcg32& rng) {
  DualBranchNet<T> net;
  net.use_cafim = cfg.arch == Arch::FireSenseNet;
  const int widths[3] = {cfg.scaled(16), cfg.scaled(32), cfg.scaled(64)};
  const int bottleneck = cfg.scaled(256);
  const int dec[3] = {cfg.scaled(128), cfg.scaled(64), cfg.scaled(32)};

  int cin = cfg.fuel_channels;
  for (int s = 0; s < 3; ++s) {
    net.fuel.push_back(ResidualBlock<T>::make("stage" + std::to_string(s + 1), cin, widths[s], 3,
                                              s == 0 ? 1 : 2, rng));
    cin = widths[s];
  }
  cin = cfg.weather_channels;
  for (int s = 0; s < 3; ++s) {
    net.weather.push_back(ResidualBlock<T>::make("stage" + std::to_string(s + 1), cin, widths[s], 5,
                                                 s == 0 ? 1 : 2, rng));
    cin = widths[s];
  }
  if (net.use_cafim) {
    for (int s = 0; s < 3; ++s) net.cafim.push_back(Cafim<T>::make("scale" + std::to_string(s + 1), widths[s], rng));
  }
  net.down = ConvBnRelu<T>::make("down", 2 * widths[2], bottleneck, 3, 2, rng);
  net.bottleneck = ResidualBlock<T>::make("res", bottleneck, bottleneck, 3, 1, rng);
  int prev = bottleneck;
  for (int s = 0; s < 3; ++s) {
    const int skip = 2 * widths[2 - s];
    net.decoder.push_back(DecoderBlock<T>::make("block" + std::to_string(s + 1), prev, skip, dec[s], rng));
    prev = dec[s];
  }
  net.head = Conv2d<T>::make("head", prev, 1, 1, 1, rng, kLinearGain);
  return net;
}

template <typename T>
BaselineNet<T> build_baseline(const ModelConfig& cfg, Pcg32& rng) {
  BaselineNet<T> net;
  const int widths[3] = {cfg.scaled(32), cfg.scaled(64), cfg.scaled(128)};
  const int bottleneck = cfg.scaled(256);
  int cin = cfg.input_channels();
  for (int s = 0; s < 3; ++s) {
    const std::string name = "stage" + std::to_string(s + 1);
    net.encoder.emplace_back(ConvBnRelu<T>::make(name + ".a", cin, widths[s], 3, 1, rng),
                             ConvBnRelu<T>::make(name + ".b", widths[s], widths[s], 3, 1, rng));
    cin = widths[s];
  }
  net.bottleneck = {ConvBnRelu<T>::make("a", cin, bottleneck, 3, 1, rng),
                    ConvBnRelu<T>::make("b", bottleneck, bottleneck, 3, 1, rng)};
  int prev = bottleneck;
  for (int s = 0; s < 3; ++s) {
    const int skip = widths[2 - s];
    net.decoder.push_back(DecoderBlock<T>::make("block" + std::to_string(s + 1), prev, skip, skip, rng));
    prev = skip;
  }
  net.head = Conv2d<T>::make("head", prev, 1, 1, 1, rng, kLinearGain);
  return net;
}

template <typename T>
ForwardResult<T> forward_dual(DualBranchNet<T>& net, const ModelConfig& cfg, const Tensor<T>& x,
                              const ForwardMode& mode) {
  ForwardResult<T> r;
  Tensor<T> f = slice_channels(x, 0, cfg.fuel_channels);
  Tensor<T> w = slice_channels(x, cfg.fuel_channels, cfg.input_channels());
  std::vector<Tensor<T>> skips;
  for (std::size_t s = 0; s < 3; ++s) {
    {
      FlopScope scope("fuel");
      f = net.fuel[s](f, mode);
    }
    {
      FlopScope scope("weather");
      w = net.weather[s](w, mode);
    }
    r.fuel_features.push_back(f);
    r.weather_features.push_back(w);
    if (net.use_cafim) {
      FlopScope scope("cafim");
      auto out = net.cafim[s](f, w);
      r.alphas.push_back(out.alpha);
      skips.push_back(out.fused);
    } else {
      skips.push_back(concat_channels(f, w));
    }
    r.fused.push_back(skips.back());
  }
  Tensor<T> h;
  {
    FlopScope scope("bottleneck");
    h = net.bottleneck(net.down(skips[2], mode), mode);
  }
  {
    FlopScope scope("decoder");
    for (std::size_t s = 0; s < 3; ++s) h = net.decoder[s](h, skips[2 - s], mode);
  }
  {
    FlopScope scope("mc_dropout");
    h = dropout(h, cfg.dropout_p, mode.rng, mode.dropout_active);
  }
  r.logits = net.head(h);
  return r;
}

template <typename T>
ForwardResult<T> forward_baseline(BaselineNet<T>& net, const ModelConfig& cfg, const Tensor<T>& x,
                                  const ForwardMode& mode) {
  ForwardResult<T> r;
  std::vector<Tensor<T>> skips;
  Tensor<T> h = x;
  {
    FlopScope scope("encoder");
    for (auto& [a, b] : net.encoder) {
      h = b(a(h, mode), mode);
      skips.push_back(h);
      FlopScope pool("pool");
      h = maxpool2x2(h);
    }
  }
  {
    FlopScope scope("bottleneck");
    h = net.bottleneck.second(net.bottleneck.first(h, mode), mode);
  }
  {
    FlopScope scope("decoder");
    for (std::size_t s = 0; s < 3; ++s) h = net.decoder[s](h, skips[2 - s], mode);
  }
  {
    FlopScope scope("mc_dropout");
    h = dropout(h, cfg.dropout_p, mode.rng, mode.dropout_active);
  }
  r.logits = net.head(h);
  return r;
}

}  // namespace

template <typename T>
ForwardResult<T> Model<T>::forward(const Tensor<T>& x, const ForwardMode& mode) {
  const bool unbatched = x.rank() == 3;
  if (!unbatched && x.rank() != 4) {
    throw DimensionError("model input must be [N,C,H,W] or [C,H,W], got " + to_string(x.shape()));
  }
  const Tensor<T> x4 = unbatched ? reshape(x, Shape{1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  if (x4.dim(1) != config_.input_channels()) {
    throw DimensionError("model expects " + std::to_string(config_.input_channels()) + " input channels, got " +
                         std::to_string(x4.dim(1)));
  }
  if (x4.dim(2) % 8 != 0 || x4.dim(3) % 8 != 0 || x4.dim(2) == 0 || x4.dim(3) == 0) {
    throw DimensionError("model input spatial dims must be positive multiples of 8, got " + to_string(x.shape()));
  }
  ForwardResult<T> r = std::visit(
      [&](auto& net) {
        if constexpr (std::is_same_v<std::decay_t<decltype(net)>, DualBranchNet<T>>) {
          return forward_dual(net, config_, x4, mode);
        } else {
          return forward_baseline(net, config_, x4, mode);
        }
      },
      net_);
  if (unbatched) {
    auto drop_batch = [](const Tensor<T>& t) { return reshape(t, Shape{t.dim(1), t.dim(2), t.dim(3)}); };
    r.logits = drop_batch(r.logits);
    for (auto& a : r.alphas) a = drop_batch(a);
  }
  return r;
}

template <typename T>
void Model<T>::for_each_parameter(const ParamVisitor<T>& v) {
  std::visit(
      [&](auto& net) {
        if constexpr (std::is_same_v<std::decay_t<decltype(net)>, DualBranchNet<T>>) {
          for (auto& b : net.fuel) b.visit("fuel", v);
          for (auto& b : net.weather) b.visit("weather", v);
          for (auto& c : net.cafim) c.visit("cafim", v);
          net.down.visit("bottleneck", v);
          net.bottleneck.visit("bottleneck", v);
          for (auto& d : net.decoder) d.visit("decoder", v);
          net.head.visit("", v);
        } else {
          for (auto& [a, b] : net.encoder) {
            a.visit("encoder", v);
            b.visit("encoder", v);
          }
          net.bottleneck.first.visit("bottleneck", v);
          net.bottleneck.second.visit("bottleneck", v);
          for (auto& d : net.decoder) d.visit("decoder", v);
          net.head.visit("", v);
        }
      },
      net_);
}

template <typename T>
void Model<T>::for_each_buffer(const BufferVisitor<T>& v) {
  std::visit(
      [&](auto& net) {
        if constexpr (std::is_same_v<std::decay_t<decltype(net)>, DualBranchNet<T>>) {
          for (auto& b : net.fuel) b.visit_buffers("fuel", v);
          for (auto& b : net.weather) b.visit_buffers("weather", v);
          net.down.visit_buffers("bottleneck", v);
          net.bottleneck.visit_buffers("bottleneck", v);
          for (auto& d : net.decoder) d.visit_buffers("decoder", v);
        } else {
          for (auto& [a, b] : net.encoder) {
            a.visit_buffers("encoder", v);
            b.visit_buffers("encoder", v);
          }
          net.bottleneck.first.visit_buffers("bottleneck", v);
          net.bottleneck.second.visit_buffers("bottleneck", v);
          for (auto& d : net.decoder) d.visit_buffers("decoder", v);
        }
      },
      net_);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Model<T>::named_parameters() {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  for_each_parameter([&](const std::string& n, Tensor<T>& t) { out.emplace_back(n, t); });
  return out;
}

template <typename T>
void Model<T>::zero_grad() {
  for_each_parameter([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

template <typename T>
Model<T> build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Pcg32 rng(derive_seed(seed, 0x1417), 0);
  if (config.arch == Arch::BaselineCNN) {
    return Model<T>(config, build_baseline<T>(config, rng));
  }
  return Model<T>(config, build_dual<T>(config, rng));
}

template <typename S, typename D>
void copy_state(Model<S>& src, Model<D>& dst) {
  std::vector<std::pair<std::string, Tensor<S>>> sp = src.named_parameters();
  std::vector<std::pair<std::string, Tensor<D>>> dp = dst.named_parameters();
  if (sp.size() != dp.size()) throw ConfigError("copy_state: parameter sets differ");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp[i].first != dp[i].first || sp[i].second.shape() != dp[i].second.shape()) {
      throw ConfigError("copy_state: parameter mismatch at '" + sp[i].first + "'");
    }
    auto in = sp[i].second.values();
    auto out = dp[i].second.mutable_values();
    for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<D>(in[j]);
  }
  std::vector<std::vector<S>*> sb;
  std::vector<std::vector<D>*> db;
  src.for_each_buffer([&](const std::string&, std::vector<S>& b) { sb.push_back(&b); });
  dst.for_each_buffer([&](const std::string&, std::vector<D>& b) { db.push_back(&b); });
  if (sb.size() != db.size()) throw ConfigError("copy_state: buffer sets differ");
  for (std::size_t i = 0; i < sb.size(); ++i) {
    if (sb[i]->size() != db[i]->size()) throw ConfigError("copy_state: buffer size mismatch");
    for (std::size_t j = 0; j < sb[i]->size(); ++j) (*db[i])[j] = static_cast<D>((*sb[i])[j]);
  }
}

namespace {
std::string layer_of(const std::string& param_name) {
  const auto dot = param_name.rfind('.');
  return dot == std::string::npos ? param_name : param_name.substr(0, dot);
}
}  // namespace

CountReport count_params(Model<float>& model) {
  CountReport report;
  model.for_each_parameter([&](const std::string& name, Tensor<float>& t) {
    const std::string layer = layer_of(name);
    if (report.layers.empty() || report.layers.back().layer != layer) report.layers.push_back({layer, 0, 0});
    report.layers.back().params += t.numel();
    report.total_params += t.numel();
  });
  return report;
}

std::int64_t count_forward_flops(const std::function<void()>& forward) {
  FlopRecorder recorder;
  NoGradGuard no_grad;
  forward();
  return recorder.total();
}

CountReport count_flops(Model<float>& model, int height, int width) {
  CountReport report;
  FlopRecorder recorder;
  {
    NoGradGuard no_grad;
    Tensor<float> x(Shape{1, model.config().input_channels(), height, width});
    (void)model.forward(x, ForwardMode::eval());
  }
  std::map<std::string, std::size_t> index;
  for (const auto& rec : recorder.records()) {
    auto it = index.find(rec.scope);
    if (it == index.end()) {
      it = index.emplace(rec.scope, report.layers.size()).first;
      report.layers.push_back({rec.scope, 0, 0});
    }
    report.layers[it->second].flops += rec.flops;
    report.total_flops += rec.flops;
  }
  return report;
}

template class Model<float>;
template class Model<double>;
template Model<float> build<float>(const ModelConfig&, std::uint64_t);
template Model<double> build<double>(const ModelConfig&, std::uint64_t);
template void copy_state(Model<float>&, Model<double>&);
template void copy_state(Model<double>&, Model<float>&);
template void copy_state(Model<float>&, Model<float>&);

}  // namespace firesense
