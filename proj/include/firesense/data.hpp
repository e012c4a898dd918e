#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "firesense/rng.hpp"

namespace firesense {

// ---------------------------------------------------------------------------
// Channel schema

enum class ChannelGroup { Fuel, Weather };

struct ChannelSchema {
  static constexpr std::size_t kChannels = 12;
  static constexpr std::size_t kFuel = 4;
  static constexpr std::size_t kWeather = 8;
  static constexpr std::array<std::string_view, kChannels> kNames = {
      "elevation", "NDVI", "population", "PrevFireMask", "th", "vs",
      "tmmn",      "tmmx", "sph",        "pr",           "pdsi", "erc"};
  static constexpr std::size_t kElevation = 0;
  static constexpr std::size_t kNdvi = 1;
  static constexpr std::size_t kPrevFireMask = 3;
  static constexpr std::size_t kWindSpeed = 5;
  static constexpr std::size_t kErc = 11;

  static ChannelGroup group(std::size_t channel) {
    return channel < kFuel ? ChannelGroup::Fuel : ChannelGroup::Weather;
  }
  static std::vector<std::string> names();
  /// Throws ConfigError for unknown names.
  static std::size_t index_of(std::string_view name);
};

std::string_view to_string(ChannelGroup g);

// ---------------------------------------------------------------------------
// Samples and datasets

/// One patch: x is channel-major [C][H][W]; y holds labels in {-1, 0, 1}.
struct Sample {
  std::uint64_t id = 0;
  std::vector<float> x;
  std::vector<std::int8_t> y;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  int height = 64;
  int width = 64;
  std::vector<std::string> channel_names = ChannelSchema::names();
  std::vector<Sample> samples;

  std::size_t channels() const { return channel_names.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t size() const { return samples.size(); }

  /// Channel `c` of sample `i` as a contiguous raster.
  std::span<const float> channel(std::size_t i, std::size_t c) const {
    return std::span<const float>(samples[i].x).subspan(c * pixels(), pixels());
  }
  std::span<float> channel(std::size_t i, std::size_t c) {
    return std::span<float>(samples[i].x).subspan(c * pixels(), pixels());
  }

  /// Throws DimensionError if any sample disagrees with the dims/schema or
  /// carries a label outside {-1, 0, 1}.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Samples selected by index (dims/schema copied).
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Container format ("FSNW", little-endian)
//
//   magic "FSNW" | u16 version | u32 n_samples | u16 H | u16 W | u16 C
//   C x (u16 length, UTF-8 channel name)
//   n_samples x (u64 id | C*H*W float32 row-major | H*W int8 target)

inline constexpr std::uint16_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode(const Dataset& ds);
/// Throws FormatError (with byte offset) on bad magic/version, truncation,
/// trailing bytes or a channel table that does not match the schema.
Dataset decode(std::span<const std::uint8_t> bytes);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
  std::vector<std::string> channels;
  std::vector<double> mean;
  std::vector<double> std;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Channels left un-normalized (PrevFireMask stays a [0,1] mask).
bool is_normalization_exempt(std::size_t channel);

/// Population mean/std per channel over every pixel of every sample.
NormStats compute_norm_stats(const Dataset& train);

/// x' = (x - mean) / max(std, 1e-6) for every non-exempt channel.
void normalize(std::span<float> x, std::size_t pixels, const NormStats& stats);
void normalize(Dataset& ds, const NormStats& stats);

/// Value a channel takes after normalization when it holds its training mean.
double normalized_mean(std::size_t channel, const NormStats& stats);

/// Text format: header "channel,mean,std" then one line per channel.
void write_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_norm_stats(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Gaussian smoothing

/// Normalized 1-D Gaussian taps, radius ceil(3 sigma). Throws ConfigError for sigma <= 0.
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur with zero padding outside the raster.
std::vector<double> gaussian_smooth(std::span<const double> raster, int height, int width, double sigma);
std::vector<float> gaussian_smooth(std::span<const float> raster, int height, int width, double sigma);

struct SmoothingConfig {
  bool enabled = true;
  double prev_fire_sigma = 0.8;
  double wind_speed_sigma = 0.4;

  friend bool operator==(const SmoothingConfig&, const SmoothingConfig&) = default;
};

void apply_smoothing(Sample& s, int height, int width, const SmoothingConfig& cfg);
void apply_smoothing(Dataset& ds, const SmoothingConfig& cfg);

/// Smoothing then normalization: the model-input transform.
struct Preprocessor {
  SmoothingConfig smoothing;
  NormStats stats;

  std::vector<float> apply(const Sample& s, int height, int width) const;
  Dataset apply(const Dataset& ds) const;
};

/// Fits smoothing + normalization on the training split only.
Preprocessor fit_preprocessor(const Dataset& train, const SmoothingConfig& smoothing);

// ---------------------------------------------------------------------------
// Training-time transforms

inline constexpr float kSoftBackgroundLo = 0.01f;
inline constexpr float kSoftBackgroundHi = 0.03f;
inline constexpr float kSoftFireLo = 0.80f;
inline constexpr float kSoftFireHi = 0.99f;

/// 0 -> U(0.01, 0.03), 1 -> U(0.80, 0.99), -1 unchanged.
std::vector<float> soft_labels(std::span<const std::int8_t> y, Pcg32& rng);
/// Exact {0,1} (and -1) as floats; the evaluation-side counterpart.
std::vector<float> hard_labels(std::span<const std::int8_t> y);

void flip_horizontal(Sample& s, int height, int width);
void flip_vertical(Sample& s, int height, int width);

struct FlipChoice {
  bool horizontal = false;
  bool vertical = false;
};

/// Flips x and y jointly, each axis with probability 0.5.
FlipChoice augment_flip(Sample& s, int height, int width, Pcg32& rng);

// ---------------------------------------------------------------------------
// Synthetic data

enum class Direction { North, East, South, West };
Direction parse_direction(const std::string& s);
std::string to_string(Direction d);

struct SyntheticOptions {
  int size = 64;
  Direction spread_bias = Direction::East;
  double empty_fraction = 0.1;    // patches with no fire at all
  double unknown_fraction = 0.05;  // patches carrying a -1 rectangle
};

/// Smooth weather fields, finer terrain fields, blob-shaped PrevFireMask and a
/// target that marks the ring newly burned by dilating the previous fire 1 px in
/// every direction and 2 px toward the spread bias. Sample i is generated from
/// derive_seed(seed, i), so results do not depend on generation order.
Dataset generate_synthetic(std::size_t n, std::uint64_t seed, const SyntheticOptions& opt = {});

// ---------------------------------------------------------------------------
// Splits

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded shuffle, then n - 2*floor(n/10) / floor(n/10) / floor(n/10). Requires n >= 10.
SplitIndices split_indices(std::size_t n, std::uint64_t seed);

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

DatasetSplits split(const Dataset& ds, std::uint64_t seed);

}  // namespace firesense
