#include <fstream>
#include <sstream>

#include "firesense/data.hpp"
#include "firesense/error.hpp"
#include "byteio.hpp"

namespace firesense {

std::vector<std::string> ChannelSchema::names() {
  return {kNames.begin(), kNames.end()};
}

std::size_t ChannelSchema::index_of(std::string_view name) {
  for (std::size_t i = 0; i < kChannels; ++i) {
    if (kNames[i] == name) return i;
  }
  throw ConfigError("unknown channel '" + std::string(name) + "'");
}

std::string_view to_string(ChannelGroup g) {
  return g == ChannelGroup::Fuel ? "fuel" : "weather";
}

void Dataset::validate() const {
  if (height < 1 || width < 1) throw DimensionError("dataset dims must be positive");
  const std::size_t nx = channels() * pixels();
  for (const auto& s : samples) {
    if (s.x.size() != nx || s.y.size() != pixels()) {
      throw DimensionError("sample " + std::to_string(s.id) + " does not match dataset dims " +
                           std::to_string(channels()) + "x" + std::to_string(height) + "x" + std::to_string(width));
    }
    for (auto v : s.y) {
      if (v < -1 || v > 1) throw DimensionError("sample " + std::to_string(s.id) + " has label outside {-1,0,1}");
    }
  }
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.height = ds.height;
  out.width = ds.width;
  out.channel_names = ds.channel_names;
  out.samples.reserve(indices.size());
  for (auto i : indices) out.samples.push_back(ds.samples.at(i));
  return out;
}

using detail::ByteReader;
using detail::ByteWriter;

std::vector<std::uint8_t> encode(const Dataset& ds) {
  ds.validate();
  if (ds.samples.size() > 0xffffffffULL || ds.height > 0xffff || ds.width > 0xffff || ds.channels() > 0xffff) {
    throw DimensionError("dataset too large for the container format");
  }
  ByteWriter w;
  w.reserve(64 + ds.samples.size() * (8 + ds.channels() * ds.pixels() * 4 + ds.pixels()));
  w.bytes("FSNW");
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.samples.size()));
  w.u16(static_cast<std::uint16_t>(ds.height));
  w.u16(static_cast<std::uint16_t>(ds.width));
  w.u16(static_cast<std::uint16_t>(ds.channels()));
  for (const auto& name : ds.channel_names) {
    if (name.size() > 0xffff) throw DimensionError("channel name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
  }
  for (const auto& s : ds.samples) {
    w.u64(s.id);
    for (float v : s.x) w.f32(v);
    for (auto v : s.y) w.u8(static_cast<std::uint8_t>(v));
  }
  return w.take();
}

Dataset decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::string magic = r.raw(4, "magic");
  if (magic != "FSNW") throw FormatError("bad magic, expected \"FSNW\"", 0);
  const std::size_t version_at = r.pos();
  const auto version = r.u16("version");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version), version_at);
  }
  const auto n = r.u32("sample count");
  Dataset ds;
  ds.height = r.u16("height");
  ds.width = r.u16("width");
  const auto c = r.u16("channel count");
  ds.channel_names.clear();
  for (std::uint16_t i = 0; i < c; ++i) {
    const auto len = r.u16("channel name length");
    ds.channel_names.push_back(r.raw(len, "channel name"));
  }
  if (ds.channel_names != ChannelSchema::names()) {
    throw FormatError("channel table does not match the 12-channel schema", r.pos());
  }
  const std::size_t per_sample = 8 + ds.channels() * ds.pixels() * 4 + ds.pixels();
  ds.samples.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t start = r.pos();
    if (r.remaining() < per_sample) {
      std::ostringstream os;
      os << "truncated sample " << i << ": expected " << per_sample << " bytes, got " << r.remaining()
         << " (expected file length " << start + per_sample * (n - i) << ", actual " << bytes.size() << ")";
      throw FormatError(os.str(), start);
    }
    Sample s;
    s.id = r.u64("sample id");
    s.x.resize(ds.channels() * ds.pixels());
    for (auto& v : s.x) v = r.f32_unchecked();
    s.y.resize(ds.pixels());
    for (auto& v : s.y) {
      const std::size_t at = r.pos();
      v = r.i8_unchecked();
      if (v < -1 || v > 1) throw FormatError("label " + std::to_string(v) + " outside {-1,0,1}", at);
    }
    ds.samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after the last sample", r.pos());
  }
  return ds;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'", 0);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'", 0);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'", 0);
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  const auto bytes = encode(ds);
  write_file(path, bytes);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode(bytes);
}

}  // namespace firesense
