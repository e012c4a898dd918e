#include <algorithm>
#include <cmath>

#include "firesense/data.hpp"
#include "firesense/error.hpp"

namespace firesense {

Direction parse_direction(const std::string& s) {
  if (s == "north" || s == "N" || s == "n") return Direction::North;
  if (s == "east" || s == "E" || s == "e") return Direction::East;
  if (s == "south" || s == "S" || s == "s") return Direction::South;
  if (s == "west" || s == "W" || s == "w") return Direction::West;
  throw ConfigError("unknown direction '" + s + "' (expected north|east|south|west)");
}

std::string to_string(Direction d) {
  switch (d) {
    case Direction::North: return "north";
    case Direction::East: return "east";
    case Direction::South: return "south";
    case Direction::West: return "west";
  }
  return "east";
}

namespace {

struct FieldSpec {
  double sigma;  // spatial correlation length in pixels
  double mean;
  double scale;
  double lo;
  double hi;
};

// Rough physical ranges of the twelve channels; index 3 (PrevFireMask) is generated separately.
constexpr std::array<FieldSpec, ChannelSchema::kChannels> kFields = {{
    {2.0, 1200.0, 600.0, 0.0, 4000.0},   // elevation [m]
    {1.5, 0.45, 0.2, -0.2, 0.95},        // NDVI
    {1.0, 0.0, 1.0, 0.0, 5000.0},        // population (log-normal below)
    {0.0, 0.0, 0.0, 0.0, 1.0},           // PrevFireMask
    {8.0, 180.0, 80.0, 0.0, 360.0},      // wind direction [deg]
    {8.0, 3.5, 1.2, 0.0, 15.0},          // wind speed [m/s]
    {8.0, 281.0, 5.0, 250.0, 300.0},     // tmmn [K]
    {8.0, 297.0, 6.0, 260.0, 320.0},     // tmmx [K]
    {8.0, 0.007, 0.002, 0.0, 0.03},      // specific humidity
    {8.0, 0.3, 0.8, 0.0, 40.0},          // precipitation [mm]
    {8.0, -1.0, 2.0, -8.0, 8.0},         // pdsi
    {8.0, 55.0, 18.0, 0.0, 120.0},       // erc
}};

// Spatially correlated standard-normal field: white noise on a padded canvas,
// blurred, cropped, re-standardized.
std::vector<double> smooth_noise(int size, double sigma, Pcg32& rng) {
  const int pad = static_cast<int>(std::ceil(3.0 * sigma));
  const int n = size + 2 * pad;
  std::vector<double> canvas(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (auto& v : canvas) v = rng.normal();
  const auto blurred = gaussian_smooth(std::span<const double>(canvas), n, n, sigma);
  std::vector<double> out(static_cast<std::size_t>(size) * static_cast<std::size_t>(size));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      out[static_cast<std::size_t>(y * size + x)] = blurred[static_cast<std::size_t>((y + pad) * n + x + pad)];
    }
  }
  double m = 0.0;
  for (double v : out) m += v;
  m /= static_cast<double>(out.size());
  double ss = 0.0;
  for (double v : out) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(out.size()));
  for (auto& v : out) v = (v - m) / std::max(sd, 1e-12);
  return out;
}

std::vector<std::uint8_t> fire_blobs(int size, Pcg32& rng) {
  std::vector<double> field(static_cast<std::size_t>(size) * static_cast<std::size_t>(size), 0.0);
  const int blobs = 1 + static_cast<int>(rng.below(2));
  const int margin = std::min(8, size / 4);
  for (int b = 0; b < blobs; ++b) {
    const double cy = margin + rng.uniform() * (size - 2 * margin);
    const double cx = margin + rng.uniform() * (size - 2 * margin);
    const double r = rng.uniform(2.0, 5.0);
    const double ry = r * rng.uniform(0.75, 1.25);
    const double rx = r * rng.uniform(0.75, 1.25);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        field[static_cast<std::size_t>(y * size + x)] += std::exp(-0.5 * (dx * dx + dy * dy) * 4.0);
      }
    }
  }
  const auto blurred = gaussian_smooth(std::span<const double>(field), size, size, 1.0);
  std::vector<std::uint8_t> mask(blurred.size());
  for (std::size_t i = 0; i < blurred.size(); ++i) mask[i] = blurred[i] > 0.25 ? 1 : 0;
  return mask;
}

std::pair<int, int> step_of(Direction d) {
  switch (d) {
    case Direction::North: return {-1, 0};
    case Direction::East: return {0, 1};
    case Direction::South: return {1, 0};
    case Direction::West: return {0, -1};
  }
  return {0, 1};
}

// Newly burned ring: 1 px dilation in all directions plus 2 px toward the bias, minus the old fire.
std::vector<std::int8_t> spread(const std::vector<std::uint8_t>& prev, int size, Direction bias) {
  std::vector<std::int8_t> y(prev.size(), 0);
  const auto [sy, sx] = step_of(bias);
  auto burn = [&](int yy, int xx) {
    if (yy < 0 || yy >= size || xx < 0 || xx >= size) return;
    y[static_cast<std::size_t>(yy * size + xx)] = 1;
  };
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      if (!prev[static_cast<std::size_t>(r * size + c)]) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) burn(r + dy, c + dx);
      }
      burn(r + 2 * sy, c + 2 * sx);
      burn(r + 2 * sy + sx, c + 2 * sx + sy);
      burn(r + 2 * sy - sx, c + 2 * sx - sy);
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (prev[i]) y[i] = 0;
  }
  return y;
}

Sample make_sample(std::uint64_t id, std::uint64_t seed, const SyntheticOptions& opt) {
  Pcg32 rng(seed, 0);
  const int size = opt.size;
  const std::size_t px = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  Sample s;
  s.id = id;
  s.x.assign(ChannelSchema::kChannels * px, 0.0f);

  for (std::size_t c = 0; c < ChannelSchema::kChannels; ++c) {
    if (c == ChannelSchema::kPrevFireMask) continue;
    const auto& f = kFields[c];
    const auto z = smooth_noise(size, f.sigma, rng);
    for (std::size_t p = 0; p < px; ++p) {
      double v = c == 2 ? std::exp(3.0 + 1.5 * z[p]) : f.mean + f.scale * z[p];
      v = std::clamp(v, f.lo, f.hi);
      s.x[c * px + p] = static_cast<float>(v);
    }
  }

  std::vector<std::uint8_t> prev(px, 0);
  if (!rng.bernoulli(opt.empty_fraction)) prev = fire_blobs(size, rng);
  for (std::size_t p = 0; p < px; ++p) s.x[ChannelSchema::kPrevFireMask * px + p] = prev[p];

  s.y = spread(prev, size, opt.spread_bias);

  if (rng.bernoulli(opt.unknown_fraction)) {
    const int h = std::min(size, 8 + static_cast<int>(rng.below(17)));
    const int w = std::min(size, 8 + static_cast<int>(rng.below(17)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(size - h + 1)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(size - w + 1)));
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) s.y[static_cast<std::size_t>(y * size + x)] = -1;
    }
  }
  return s;
}

}  // namespace

Dataset generate_synthetic(std::size_t n, std::uint64_t seed, const SyntheticOptions& opt) {
  if (n < 1) throw ConfigError("generate_synthetic needs n >= 1");
  if (opt.size < 8 || opt.size % 8 != 0) throw ConfigError("synthetic patch size must be a positive multiple of 8");
  if (opt.empty_fraction < 0 || opt.empty_fraction > 1 || opt.unknown_fraction < 0 || opt.unknown_fraction > 1) {
    throw ConfigError("synthetic fractions must lie in [0, 1]");
  }
  Dataset ds;
  ds.height = opt.size;
  ds.width = opt.size;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ds.samples.push_back(make_sample(i, derive_seed(seed, i), opt));
  return ds;
}

}  // namespace firesense
