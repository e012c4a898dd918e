#include <doctest.h>

#include <filesystem>

#include "firesense/analysis.hpp"
#include "firesense/config.hpp"
#include "firesense/error.hpp"
#include "firesense/io.hpp"
#include "firesense/ops.hpp"
#include "firesense/train.hpp"
#include "helpers.hpp"

using namespace firesense;

namespace {

struct Setup {
  Dataset raw = generate_synthetic(4, 21, SyntheticOptions{.size = 16});
  Preprocessor pre = fit_preprocessor(raw, SmoothingConfig{});
  Dataset prepped = pre.apply(raw);

  Tensor<float> sample(std::size_t i) const {
    return Tensor<float>({12, 16, 16}, prepped.samples[i].x);
  }
};

Model<float> small(Arch arch, double dropout, std::uint64_t seed = 1, double width = 0.25) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.width_mult = width;
  cfg.dropout_p = dropout;
  return build<float>(cfg, seed);
}

}  // namespace

TEST_CASE("mc dropout with p = 0 has zero spread") {
  Setup s;
  auto m = small(Arch::FireSenseNet, 0.0);
  const auto u = mc_predict(m, s.sample(0));
  CHECK(u.n_passes == kDefaultMcPasses);
  CHECK(u.n_passes == 20);
  for (auto v : u.std) CHECK(v == 0.0f);
}

TEST_CASE("mc dropout is reproducible and the mean is inside the pass envelope") {
  Setup s;
  auto m = small(Arch::FireSenseNet, 0.3);
  std::vector<std::vector<float>> passes;
  const auto a = mc_predict(m, s.sample(1), 20, 7, &passes);
  const auto b = mc_predict(m, s.sample(1), 20, 7);
  CHECK(a == b);
  REQUIRE(passes.size() == 20);
  bool any_spread = false;
  for (std::size_t i = 0; i < a.mean.size(); ++i) {
    float lo = passes[0][i], hi = passes[0][i];
    for (const auto& p : passes) {
      lo = std::min(lo, p[i]);
      hi = std::max(hi, p[i]);
    }
    CHECK(a.mean[i] >= lo);
    CHECK(a.mean[i] <= hi);
    CHECK(a.std[i] >= 0.0f);
    if (lo == hi) CHECK(a.std[i] == 0.0f);
    any_spread = any_spread || a.std[i] > 0.0f;
  }
  CHECK(any_spread);
  CHECK_FALSE(mc_predict(m, s.sample(1), 20, 8) == a);
  CHECK_THROWS_AS(mc_predict(m, s.sample(1), 1), ConfigError);
}

TEST_CASE("mc dropout keeps batchnorm statistics frozen") {
  Setup s;
  auto m = small(Arch::FireSenseNet, 0.3);
  std::vector<std::vector<float>> before;
  m.for_each_buffer([&](const std::string&, std::vector<float>& b) { before.push_back(b); });
  mc_predict(m, s.sample(0), 5, 1);
  std::size_t i = 0;
  m.for_each_buffer([&](const std::string&, std::vector<float>& b) { CHECK(fst::bitwise_equal(b, before[i++])); });
}

TEST_CASE("importance of a channel the network ignores is exactly zero") {
  Setup s;
  // Width 0.5 gives the first fuel stage a projection shortcut, so elevation
  // (channel 0) reaches the network only through conv1 and the projection.
  auto m = small(Arch::FireSenseNet, 0.0, 3, 0.5);
  int zeroed = 0;
  for (auto& [name, p] : m.named_parameters()) {
    if (p.rank() != 4 || p.dim(1) != 4) continue;
    if (name.rfind("fuel.stage1.", 0) != 0) continue;
    ++zeroed;
    auto w = p.mutable_values();
    const auto per_in = p.dim(2) * p.dim(3);
    for (std::int64_t o = 0; o < p.dim(0); ++o)
      for (std::int64_t k = 0; k < per_in; ++k) w[static_cast<std::size_t>(o * 4 * per_in + k)] = 0.0f;
  }
  CHECK(zeroed == 2);
  const auto report = channel_importance(m, s.pre, s.raw, 0.5);
  REQUIRE(report.rows.size() == 12);
  CHECK(report.rows[0].delta_f1 == 0.0);
  for (const auto& r : report.rows) CHECK(r.baseline_f1 == report.baseline_f1);
  const auto again = channel_importance(m, s.pre, s.raw, 0.5);
  for (std::size_t c = 0; c < 12; ++c) CHECK(again.rows[c].delta_f1 == report.rows[c].delta_f1);
}

TEST_CASE("masking every channel equals a constant input") {
  Setup s;
  auto m = small(Arch::BaselineCNN, 0.0, 4);
  std::vector<std::size_t> all(12);
  for (std::size_t c = 0; c < 12; ++c) all[c] = c;
  const double f1 = masked_f1(m, s.pre, s.raw, all, 0.5);
  Dataset flat = s.prepped;
  for (auto& smp : flat.samples)
    for (std::size_t c = 0; c < 12; ++c)
      for (std::size_t i = 0; i < flat.pixels(); ++i)
        smp.x[c * flat.pixels() + i] = static_cast<float>(normalized_mean(c, s.pre.stats));
  const auto probs = predict_probs(m, flat);
  for (std::size_t i = 1; i < probs.size(); ++i) CHECK(fst::bitwise_equal(probs[i], probs[0]));
  Confusion total;
  for (std::size_t i = 0; i < probs.size(); ++i) total += confusion(probs[i], s.raw.samples[i].y, 0.5);
  CHECK(f1 == prf1(total).f1);
  CHECK_THROWS(masked_f1(m, s.pre, s.raw, std::vector<std::size_t>{12}, 0.5));
}

TEST_CASE("attention export") {
  Setup s;
  auto m = small(Arch::FireSenseNet, 0.3);
  const auto alphas = export_attention(m, s.sample(2));
  REQUIRE(alphas.size() == 3);
  CHECK(alphas[0].shape() == Shape{1, 16, 16});
  CHECK(alphas[1].shape() == Shape{1, 8, 8});
  CHECK(alphas[2].shape() == Shape{1, 4, 4});
  for (const auto& a : alphas)
    for (auto v : a.values()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  // the exported maps are the ones used for fusion
  auto fwd = m.forward(s.sample(2), ForwardMode::eval());
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(fst::bitwise_equal(fwd.alphas[k].values(), alphas[k].values()));
    const auto& f = fwd.fuel_features[k];
    const auto& w = fwd.weather_features[k];
    const auto c = f.dim(1), hw = f.dim(2) * f.dim(3);
    std::size_t bad = 0;
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < hw; ++i) {
        const float a = alphas[k].values()[static_cast<std::size_t>(i)];
        const auto src = static_cast<std::size_t>(ch * hw + i);
        bad += fwd.fused[k].values()[static_cast<std::size_t>(ch * hw + i)] != f.values()[src] * a;
        bad += fwd.fused[k].values()[static_cast<std::size_t>((c + ch) * hw + i)] != w.values()[src] * (1.0f - a);
      }
    CHECK(bad == 0);
  }

  auto base = small(Arch::BaselineCNN, 0.3);
  CHECK_THROWS_AS(export_attention(base, s.sample(2)), ConfigError);
  auto concat = small(Arch::FireSenseNetConcat, 0.3);
  CHECK_THROWS_AS(export_attention(concat, s.sample(2)), ConfigError);
}

TEST_CASE("copy-prev predictor returns the raw previous fire mask") {
  Setup s;
  CopyPrevPredictor p;
  const auto probs = p.predict(s.raw);
  REQUIRE(probs.size() == s.raw.size());
  for (std::size_t i = 0; i < s.raw.size(); ++i) {
    const auto prev = s.raw.channel(i, ChannelSchema::kPrevFireMask);
    CHECK(fst::bitwise_equal(probs[i], std::vector<float>(prev.begin(), prev.end())));
  }
}

TEST_CASE("raster round trip") {
  Pcg32 rng(3);
  std::vector<float> v(6 * 5);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  const auto bytes = encode_raster(6, 5, v);
  CHECK(bytes.size() == 4 + 2 + 2 + v.size() * 4);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FSR1");
  const auto r = decode_raster(bytes);
  CHECK(r.height == 6);
  CHECK(r.width == 5);
  CHECK(fst::bitwise_equal(r.values, v));
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(decode_raster(cut), FormatError);
  CHECK_THROWS_AS(encode_raster(6, 4, v), DimensionError);

  const auto path = std::filesystem::temp_directory_path() / "firesense_raster.fsr";
  write_raster(path, 6, 5, v);
  CHECK(read_raster(path) == r);
  std::filesystem::remove(path);
}

TEST_CASE("run config") {
  RunConfig cfg;
  CHECK(cfg.get("lr") == "0.0003");
  cfg.set("lr", "0.001");
  CHECK(cfg.train().lr == 0.001);
  CHECK_THROWS_AS(cfg.set("learning_rate", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("batch_size", "many"), ConfigError);
  CHECK_THROWS_AS(cfg.load_text("# comment\n\nnot_a_key=3\n"), ConfigError);
  CHECK_THROWS_AS(cfg.load_text("missing equals\n"), ConfigError);

  cfg.load_text("# comment\n\narch=concat\nwidth_mult=0.5\n");
  CHECK(cfg.model().arch == Arch::FireSenseNetConcat);
  CHECK(cfg.model().width_mult == 0.5);

  RunConfig copy;
  copy.load_text(cfg.echo());
  CHECK(copy.echo() == cfg.echo());
  for (const auto& k : RunConfig::keys()) CHECK(copy.get(k) == cfg.get(k));
}
