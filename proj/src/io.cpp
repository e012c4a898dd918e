#include "firesense/io.hpp"

#include "byteio.hpp"
#include "firesense/data.hpp"
#include "firesense/error.hpp"

namespace firesense {

std::vector<std::uint8_t> encode_raster(int height, int width, std::span<const float> values) {
  if (height < 1 || width < 1 || height > 0xffff || width > 0xffff) {
    throw DimensionError("raster dims must lie in [1, 65535]");
  }
  if (values.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw DimensionError("raster holds " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  detail::ByteWriter w;
  w.reserve(8 + values.size() * 4);
  w.bytes("FSR1");
  w.u16(static_cast<std::uint16_t>(height));
  w.u16(static_cast<std::uint16_t>(width));
  for (float v : values) w.f32(v);
  return w.take();
}

Raster decode_raster(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(4, "magic") != "FSR1") throw FormatError("bad magic, expected \"FSR1\"", 0);
  Raster out;
  out.height = r.u16("height");
  out.width = r.u16("width");
  const std::size_t n = static_cast<std::size_t>(out.height) * static_cast<std::size_t>(out.width);
  r.need(n * 4, "raster values");
  out.values.resize(n);
  for (auto& v : out.values) v = r.f32_unchecked();
  if (r.remaining() != 0) throw FormatError("trailing bytes after raster", r.pos());
  return out;
}

void write_raster(const std::filesystem::path& path, int height, int width, std::span<const float> values) {
  write_file(path, encode_raster(height, width, values));
}

Raster read_raster(const std::filesystem::path& path) { return decode_raster(read_file(path)); }

}  // namespace firesense
