#include "firesense/checkpoint.hpp"

#include "byteio.hpp"
#include "firesense/error.hpp"

namespace firesense {

using detail::ByteReader;
using detail::ByteWriter;

Checkpoint capture(Model<float>& model, const Preprocessor& pre, const TrainState* state, std::string config_echo) {
  Checkpoint c;
  c.model = model.config();
  c.preprocessor = pre;
  model.for_each_parameter([&](const std::string& name, Tensor<float>& t) {
    c.params.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
  });
  model.for_each_buffer([&](const std::string& name, std::vector<float>& b) {
    c.buffers.push_back({name, Shape{static_cast<std::int64_t>(b.size())}, b});
  });
  if (state) c.train = *state;
  c.config_echo = std::move(config_echo);
  return c;
}

void restore(const Checkpoint& ckpt, Model<float>& model) {
  std::size_t k = 0;
  model.for_each_parameter([&](const std::string& name, Tensor<float>& t) {
    if (k >= ckpt.params.size() || ckpt.params[k].name != name || ckpt.params[k].shape != t.shape()) {
      throw ConfigError("checkpoint does not match the model at parameter '" + name + "'");
    }
    std::copy(ckpt.params[k].values.begin(), ckpt.params[k].values.end(), t.mutable_values().begin());
    ++k;
  });
  if (k != ckpt.params.size()) throw ConfigError("checkpoint has more parameters than the model");
  k = 0;
  model.for_each_buffer([&](const std::string& name, std::vector<float>& b) {
    if (k >= ckpt.buffers.size() || ckpt.buffers[k].name != name || ckpt.buffers[k].values.size() != b.size()) {
      throw ConfigError("checkpoint does not match the model at buffer '" + name + "'");
    }
    b = ckpt.buffers[k].values;
    ++k;
  });
  if (k != ckpt.buffers.size()) throw ConfigError("checkpoint has more buffers than the model");
}

Model<float> instantiate(const Checkpoint& ckpt) {
  auto model = build<float>(ckpt.model, 0);
  restore(ckpt, model);
  return model;
}

namespace {

void put_blobs(ByteWriter& w, const std::vector<NamedBlob>& blobs) {
  w.u32(static_cast<std::uint32_t>(blobs.size()));
  for (const auto& b : blobs) {
    w.str(b.name);
    w.u8(static_cast<std::uint8_t>(b.shape.size()));
    for (auto d : b.shape) w.i64(d);
    w.f32s(b.values);
  }
}

std::vector<NamedBlob> get_blobs(ByteReader& r) {
  const auto n = r.u32("blob count");
  std::vector<NamedBlob> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedBlob b;
    b.name = r.str("blob name");
    const auto rank = r.u8("blob rank");
    for (int d = 0; d < rank; ++d) {
      const auto at = r.pos();
      const auto v = r.i64("blob dim");
      if (v < 0) throw FormatError("negative dimension in blob '" + b.name + "'", at);
      b.shape.push_back(v);
    }
    const auto at = r.pos();
    b.values = r.f32s("blob values");
    if (static_cast<std::int64_t>(b.values.size()) != numel(b.shape)) {
      throw FormatError("blob '" + b.name + "' holds " + std::to_string(b.values.size()) + " values, shape " +
                            to_string(b.shape) + " needs " + std::to_string(numel(b.shape)),
                        at);
    }
    out.push_back(std::move(b));
  }
  return out;
}

void put_rows(ByteWriter& w, const std::vector<std::vector<float>>& rows) {
  w.u32(static_cast<std::uint32_t>(rows.size()));
  for (const auto& r : rows) w.f32s(r);
}

std::vector<std::vector<float>> get_rows(ByteReader& r, const char* what) {
  const auto n = r.u32(what);
  std::vector<std::vector<float>> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.f32s(what));
  return out;
}

void put_rng(ByteWriter& w, const Pcg32::State& s) {
  w.u64(s.state);
  w.u64(s.inc);
}

Pcg32::State get_rng(ByteReader& r) {
  Pcg32::State s;
  s.state = r.u64("rng state");
  s.inc = r.u64("rng increment");
  return s;
}

void put_train(ByteWriter& w, const TrainState& s) {
  w.i32(s.next_epoch);
  w.i64(s.adam.step);
  put_rows(w, s.adam.m);
  put_rows(w, s.adam.v);
  w.f64(s.best_f1);
  w.i32(s.best_epoch);
  w.i32(s.since_best);
  w.i32(s.epochs_to_target);
  w.u8(s.finished ? 1 : 0);
  put_rng(w, s.data_rng);
  put_rng(w, s.aug_rng);
  put_rng(w, s.dropout_rng);
  w.u32(static_cast<std::uint32_t>(s.history.size()));
  for (const auto& h : s.history) {
    w.i32(h.epoch);
    for (double v : {h.lr, h.loss, h.wbce, h.dice, h.focal, h.val_f1}) w.f64(v);
  }
  put_rows(w, s.best_params);
  put_rows(w, s.best_buffers);
}

TrainState get_train(ByteReader& r) {
  TrainState s;
  s.next_epoch = r.i32("epoch");
  s.adam.step = r.i64("optimizer step");
  s.adam.m = get_rows(r, "optimizer first moments");
  s.adam.v = get_rows(r, "optimizer second moments");
  s.best_f1 = r.f64("best F1");
  s.best_epoch = r.i32("best epoch");
  s.since_best = r.i32("epochs since best");
  s.epochs_to_target = r.i32("epochs to target");
  s.finished = r.u8("finished flag") != 0;
  s.data_rng = get_rng(r);
  s.aug_rng = get_rng(r);
  s.dropout_rng = get_rng(r);
  const auto n = r.u32("history length");
  for (std::uint32_t i = 0; i < n; ++i) {
    EpochRecord h;
    h.epoch = r.i32("history epoch");
    h.lr = r.f64("history lr");
    h.loss = r.f64("history loss");
    h.wbce = r.f64("history wbce");
    h.dice = r.f64("history dice");
    h.focal = r.f64("history focal");
    h.val_f1 = r.f64("history val_f1");
    s.history.push_back(h);
  }
  s.best_params = get_rows(r, "best parameters");
  s.best_buffers = get_rows(r, "best buffers");
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes("FSCK");
  w.u16(kCheckpointVersion);
  w.str(c.config_echo);

  w.str(to_string(c.model.arch));
  w.f64(c.model.width_mult);
  w.f64(c.model.dropout_p);
  w.i32(c.model.fuel_channels);
  w.i32(c.model.weather_channels);

  const auto& p = c.preprocessor;
  w.u8(p.smoothing.enabled ? 1 : 0);
  w.f64(p.smoothing.prev_fire_sigma);
  w.f64(p.smoothing.wind_speed_sigma);
  w.u32(static_cast<std::uint32_t>(p.stats.mean.size()));
  for (std::size_t i = 0; i < p.stats.mean.size(); ++i) {
    w.str(p.stats.channels.at(i));
    w.f64(p.stats.mean[i]);
    w.f64(p.stats.std.at(i));
  }

  put_blobs(w, c.params);
  put_blobs(w, c.buffers);
  w.u8(c.train ? 1 : 0);
  if (c.train) put_train(w, *c.train);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.raw(4, "magic") != "FSCK") throw FormatError("bad magic, expected \"FSCK\"", 0);
  const auto version_at = r.pos();
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  Checkpoint c;
  c.config_echo = r.str("config echo");

  const auto arch_at = r.pos();
  const auto arch = r.str("architecture");
  try {
    c.model.arch = parse_arch(arch);
  } catch (const ConfigError&) {
    throw FormatError("unknown architecture '" + arch + "'", arch_at);
  }
  c.model.width_mult = r.f64("width multiplier");
  c.model.dropout_p = r.f64("dropout");
  c.model.fuel_channels = r.i32("fuel channels");
  c.model.weather_channels = r.i32("weather channels");

  auto& p = c.preprocessor;
  p.smoothing.enabled = r.u8("smoothing flag") != 0;
  p.smoothing.prev_fire_sigma = r.f64("smoothing sigma");
  p.smoothing.wind_speed_sigma = r.f64("smoothing sigma");
  const auto nstats = r.u32("norm stats count");
  for (std::uint32_t i = 0; i < nstats; ++i) {
    p.stats.channels.push_back(r.str("channel name"));
    p.stats.mean.push_back(r.f64("channel mean"));
    p.stats.std.push_back(r.f64("channel std"));
  }

  c.params = get_blobs(r);
  c.buffers = get_blobs(r);
  if (r.u8("train-state flag")) c.train = get_train(r);
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after checkpoint", r.pos());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace firesense
