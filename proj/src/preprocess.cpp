#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "firesense/data.hpp"
#include "firesense/error.hpp"

namespace firesense {

bool is_normalization_exempt(std::size_t channel) { return channel == ChannelSchema::kPrevFireMask; }

NormStats compute_norm_stats(const Dataset& train) {
  train.validate();
  NormStats st;
  st.channels = train.channel_names;
  const std::size_t c = train.channels();
  const std::size_t px = train.pixels();
  st.mean.assign(c, 0.0);
  st.std.assign(c, 0.0);
  if (train.samples.empty()) {
    st.std.assign(c, 1.0);
    return st;
  }
  const double count = static_cast<double>(px) * static_cast<double>(train.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (float v : train.channel(i, ch)) s += v;
    }
    const double m = s / count;
    double ss = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (float v : train.channel(i, ch)) ss += (v - m) * (v - m);
    }
    st.mean[ch] = m;
    st.std[ch] = std::sqrt(ss / count);
  }
  return st;
}

void normalize(std::span<float> x, std::size_t pixels, const NormStats& stats) {
  if (x.size() != pixels * stats.mean.size()) {
    throw DimensionError("normalize: raster has " + std::to_string(x.size()) + " values, expected " +
                         std::to_string(pixels * stats.mean.size()));
  }
  for (std::size_t ch = 0; ch < stats.mean.size(); ++ch) {
    if (is_normalization_exempt(ch)) continue;
    const double m = stats.mean[ch];
    const double s = std::max(stats.std[ch], 1e-6);
    for (std::size_t p = 0; p < pixels; ++p) {
      float& v = x[ch * pixels + p];
      v = static_cast<float>((static_cast<double>(v) - m) / s);
    }
  }
}

void normalize(Dataset& ds, const NormStats& stats) {
  for (auto& s : ds.samples) normalize(s.x, ds.pixels(), stats);
}

double normalized_mean(std::size_t channel, const NormStats& stats) {
  if (channel >= stats.mean.size()) throw ConfigError("channel index " + std::to_string(channel) + " out of range");
  return is_normalization_exempt(channel) ? stats.mean[channel] : 0.0;
}

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'", 0);
  out << "channel,mean,std\n" << std::setprecision(17);
  for (std::size_t i = 0; i < stats.mean.size(); ++i) {
    out << stats.channels[i] << ',' << stats.mean[i] << ',' << stats.std[i] << '\n';
  }
}

NormStats read_norm_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'", 0);
  NormStats st;
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || line != "channel,mean,std") {
    throw FormatError("norm stats header must be 'channel,mean,std'", 0);
  }
  offset += line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, m, s;
    if (!std::getline(ls, name, ',') || !std::getline(ls, m, ',') || !std::getline(ls, s)) {
      throw FormatError("malformed norm stats line '" + line + "'", offset);
    }
    try {
      st.channels.push_back(name);
      st.mean.push_back(std::stod(m));
      st.std.push_back(std::stod(s));
    } catch (const std::exception&) {
      throw FormatError("non-numeric norm stats line '" + line + "'", offset);
    }
    offset += line.size() + 1;
  }
  if (st.channels != ChannelSchema::names()) throw FormatError("norm stats channels do not match the schema", 0);
  return st;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("gaussian sigma must be > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = w;
    total += w;
  }
  for (auto& w : k) w /= total;
  return k;
}

std::vector<double> gaussian_smooth(std::span<const double> raster, int height, int width, double sigma) {
  if (raster.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw DimensionError("gaussian_smooth: raster size does not match dims");
  }
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(raster.size(), 0.0), out(raster.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int xx = x + d;
        if (xx < 0 || xx >= width) continue;
        acc += k[static_cast<std::size_t>(d + r)] * raster[static_cast<std::size_t>(y * width + xx)];
      }
      tmp[static_cast<std::size_t>(y * width + x)] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int d = -r; d <= r; ++d) {
        const int yy = y + d;
        if (yy < 0 || yy >= height) continue;
        acc += k[static_cast<std::size_t>(d + r)] * tmp[static_cast<std::size_t>(yy * width + x)];
      }
      out[static_cast<std::size_t>(y * width + x)] = acc;
    }
  }
  return out;
}

std::vector<float> gaussian_smooth(std::span<const float> raster, int height, int width, double sigma) {
  std::vector<double> d(raster.begin(), raster.end());
  const auto out = gaussian_smooth(std::span<const double>(d), height, width, sigma);
  return {out.begin(), out.end()};
}

namespace {

void smooth_channel(std::span<float> ch, int height, int width, double sigma) {
  const auto out = gaussian_smooth(std::span<const float>(ch.data(), ch.size()), height, width, sigma);
  std::copy(out.begin(), out.end(), ch.begin());
}

}  // namespace

void apply_smoothing(Sample& s, int height, int width, const SmoothingConfig& cfg) {
  if (!cfg.enabled) return;
  const std::size_t px = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (s.x.size() != px * ChannelSchema::kChannels) throw DimensionError("apply_smoothing: sample size mismatch");
  std::span<float> x(s.x);
  smooth_channel(x.subspan(ChannelSchema::kPrevFireMask * px, px), height, width, cfg.prev_fire_sigma);
  smooth_channel(x.subspan(ChannelSchema::kWindSpeed * px, px), height, width, cfg.wind_speed_sigma);
}

void apply_smoothing(Dataset& ds, const SmoothingConfig& cfg) {
  for (auto& s : ds.samples) apply_smoothing(s, ds.height, ds.width, cfg);
}

std::vector<float> Preprocessor::apply(const Sample& s, int height, int width) const {
  Sample tmp{s.id, s.x, {}};
  apply_smoothing(tmp, height, width, smoothing);
  normalize(tmp.x, static_cast<std::size_t>(height) * static_cast<std::size_t>(width), stats);
  return std::move(tmp.x);
}

Dataset Preprocessor::apply(const Dataset& ds) const {
  Dataset out = ds;
  apply_smoothing(out, smoothing);
  normalize(out, stats);
  return out;
}

Preprocessor fit_preprocessor(const Dataset& train, const SmoothingConfig& smoothing) {
  Dataset smoothed = train;
  apply_smoothing(smoothed, smoothing);
  return Preprocessor{smoothing, compute_norm_stats(smoothed)};
}

std::vector<float> soft_labels(std::span<const std::int8_t> y, Pcg32& rng) {
  std::vector<float> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) {
      out[i] = -1.0f;
      continue;
    }
    const bool fire = y[i] == 1;
    const float lo = fire ? kSoftFireLo : kSoftBackgroundLo;
    const float hi = fire ? kSoftFireHi : kSoftBackgroundHi;
    const auto v = static_cast<float>(rng.uniform(lo, hi));
    out[i] = std::clamp(v, lo, hi);
  }
  return out;
}

std::vector<float> hard_labels(std::span<const std::int8_t> y) {
  return {y.begin(), y.end()};
}

namespace {

template <typename V>
void flip_raster_h(V* data, int height, int width) {
  for (int y = 0; y < height; ++y) std::reverse(data + y * width, data + (y + 1) * width);
}

template <typename V>
void flip_raster_v(V* data, int height, int width) {
  for (int y = 0; y < height / 2; ++y) {
    std::swap_ranges(data + y * width, data + (y + 1) * width, data + (height - 1 - y) * width);
  }
}

}  // namespace

void flip_horizontal(Sample& s, int height, int width) {
  const std::size_t px = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (std::size_t c = 0; c * px < s.x.size(); ++c) flip_raster_h(s.x.data() + c * px, height, width);
  flip_raster_h(s.y.data(), height, width);
}

void flip_vertical(Sample& s, int height, int width) {
  const std::size_t px = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  for (std::size_t c = 0; c * px < s.x.size(); ++c) flip_raster_v(s.x.data() + c * px, height, width);
  flip_raster_v(s.y.data(), height, width);
}

FlipChoice augment_flip(Sample& s, int height, int width, Pcg32& rng) {
  FlipChoice f;
  f.horizontal = rng.bernoulli(0.5);
  f.vertical = rng.bernoulli(0.5);
  if (f.horizontal) flip_horizontal(s, height, width);
  if (f.vertical) flip_vertical(s, height, width);
  return f;
}

SplitIndices split_indices(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw ConfigError("split needs at least 10 samples, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Pcg32 rng(derive_seed(seed, 0x5b1), 0);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = rng.below(static_cast<std::uint32_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  const std::size_t k = n / 10;
  SplitIndices out;
  out.train.assign(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(2 * k));
  out.val.assign(idx.end() - static_cast<std::ptrdiff_t>(2 * k), idx.end() - static_cast<std::ptrdiff_t>(k));
  out.test.assign(idx.end() - static_cast<std::ptrdiff_t>(k), idx.end());
  return out;
}

DatasetSplits split(const Dataset& ds, std::uint64_t seed) {
  const auto s = split_indices(ds.size(), seed);
  return {subset(ds, s.train), subset(ds, s.val), subset(ds, s.test)};
}

}  // namespace firesense
