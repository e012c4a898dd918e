#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace firesense {

/// Single-band raster: "FSR1" | u16 H | u16 W | H*W float32, little-endian, row-major.
struct Raster {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  friend bool operator==(const Raster&, const Raster&) = default;
};

std::vector<std::uint8_t> encode_raster(int height, int width, std::span<const float> values);
Raster decode_raster(std::span<const std::uint8_t> bytes);

void write_raster(const std::filesystem::path& path, int height, int width, std::span<const float> values);
Raster read_raster(const std::filesystem::path& path);

}  // namespace firesense
