#include <doctest.h>

#include <cstdio>
#include <set>

#include "firesense/error.hpp"
#include "firesense/model.hpp"
#include "firesense/ops.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace firesense;
using fst::random_tensor;

namespace {

using namespace fst;

ModelConfig cfg_of(Arch a, double m = 0.25, double p = 0.3) {
  ModelConfig c;
  c.arch = a;
  c.width_mult = m;
  c.dropout_p = p;
  return c;
}

std::vector<float> params_flat(Model<float>& m) {
  std::vector<float> out;
  m.for_each_parameter([&](const std::string&, Tensor<float>& t) {
    out.insert(out.end(), t.values().begin(), t.values().end());
  });
  return out;
}

}  // namespace

TEST_CASE("closed-form fixtures") {
  Pcg32 rng(0);
  auto c = Conv2d<float>::make("c", 12, 32, 3, 1, rng);
  CHECK(count_layer_params(c) == 3488);
  CHECK(count_forward_flops([&] { (void)c(Tensor<float>({1, 12, 64, 64}, 0.0f)); }) == 28311552);
  auto h = Conv2d<float>::make("h", 64, 1, 1, 1, rng);
  CHECK(count_layer_params(h) == 65);
  auto id = Conv2d<float>::make("id", 1, 1, 1, 1, rng);
  CHECK(count_forward_flops([&] { (void)id(Tensor<float>({1, 1, 64, 64}, 0.0f)); }) == 8192);
  CHECK(conv_param_count(3, 12, 32) == 3488);
  CHECK(conv_flop_count(3, 12, 32, 64, 64) == 28311552);
}

TEST_CASE("params and FLOPs match closed-form layer sums on 20 handcrafted configs") {
  const auto rows = handcrafted_counts();
  REQUIRE(rows.size() == 20);
  for (const auto& r : rows) {
    CAPTURE(r.what);
    CHECK(r.params == r.want_params);
    CHECK(r.flops == r.want_flops);
  }
}

TEST_CASE("full FireSenseNet parameter total equals the closed-form sum") {
  for (double m : {0.25, 0.5, 1.0}) {
    auto model = build<float>(cfg_of(Arch::FireSenseNet, m), 0);
    CHECK(count_params(model).total_params == firesensenet_params(4, 8, m));
  }
}

TEST_CASE("default totals next to the published figures") {
  auto fsn = build<float>(cfg_of(Arch::FireSenseNet, 1.0), 0);
  auto base = build<float>(cfg_of(Arch::BaselineCNN, 1.0), 0);
  const auto p = count_params(fsn).total_params;
  const auto f = count_flops(fsn).total_flops;
  const auto bp = count_params(base).total_params;
  MESSAGE("FireSenseNet: " << p << " params (published 3.01M), " << f << " FLOPs (published 2.52G)");
  MESSAGE("BaselineCNN: " << bp << " params (published 1.15M)");
  // Per-layer rows sum to the totals.
  i64 s = 0;
  for (const auto& l : count_params(fsn).layers) s += l.params;
  CHECK(s == p);
  s = 0;
  for (const auto& l : count_flops(fsn).layers) s += l.flops;
  CHECK(s == f);
}

TEST_CASE("CAFIM adds parameters; concat variant differs only in the fusion modules") {
  auto a = build<float>(cfg_of(Arch::FireSenseNet), 0);
  auto b = build<float>(cfg_of(Arch::FireSenseNetConcat), 0);
  CHECK(count_params(a).total_params > count_params(b).total_params);
  std::set<std::string> na, nb;
  for (auto& [n, t] : a.named_parameters()) na.insert(n);
  for (auto& [n, t] : b.named_parameters()) nb.insert(n);
  for (const auto& n : nb) CHECK(na.count(n) == 1);
  for (const auto& n : na) {
    if (!nb.count(n)) CHECK(n.find("cafim") != std::string::npos);
  }
}

TEST_CASE("decoder channel ladder") {
  auto m = build<float>(cfg_of(Arch::FireSenseNet, 1.0), 0);
  auto* net = m.dual_branch();
  REQUIRE(net != nullptr);
  CHECK(net->down.conv.out_channels() == 256);
  CHECK(net->decoder[0].conv2.conv.out_channels() == 128);
  CHECK(net->decoder[1].conv2.conv.out_channels() == 64);
  CHECK(net->decoder[2].conv2.conv.out_channels() == 32);
  CHECK(net->head.out_channels() == 1);
}

TEST_CASE("forward on zeros gives finite 64x64 logits and three alpha maps") {
  auto m = build<float>(cfg_of(Arch::FireSenseNet, 1.0), 3);
  NoGradGuard ng;
  auto r = m.forward(Tensor<float>({12, 64, 64}, 0.0f), ForwardMode::eval());
  CHECK(r.logits.shape() == Shape{1, 64, 64});
  for (auto v : r.logits.values()) CHECK(std::isfinite(v));
  REQUIRE(r.alphas.size() == 3);
  CHECK(r.alphas[0].shape() == Shape{1, 64, 64});
  CHECK(r.alphas[1].shape() == Shape{1, 32, 32});
  CHECK(r.alphas[2].shape() == Shape{1, 16, 16});
}

TEST_CASE("build is deterministic per seed") {
  auto a = build<float>(cfg_of(Arch::FireSenseNet), 11);
  auto b = build<float>(cfg_of(Arch::FireSenseNet), 11);
  auto c = build<float>(cfg_of(Arch::FireSenseNet), 12);
  CHECK(params_flat(a) == params_flat(b));
  CHECK(params_flat(a) != params_flat(c));
}

TEST_CASE("eval forward is deterministic and bounded inputs stay finite") {
  Pcg32 rng(4);
  for (auto arch : {Arch::FireSenseNet, Arch::FireSenseNetConcat, Arch::BaselineCNN}) {
    auto m = build<float>(cfg_of(arch), 5);
    auto x = random_tensor({2, 12, 32, 32}, rng, -10.0, 10.0);
    NoGradGuard ng;
    auto y1 = m.forward(x, ForwardMode::eval()).logits;
    auto y2 = m.forward(x, ForwardMode::eval()).logits;
    CHECK(y1.shape() == Shape{2, 1, 32, 32});
    CHECK(fst::bitwise_equal(y1.values(), y2.values()));
  }
}

TEST_CASE("weather channel permutation") {
  Pcg32 rng(6);
  auto m = build<float>(cfg_of(Arch::FireSenseNet), 7);
  auto x = random_tensor({1, 12, 16, 16}, rng);
  auto permute = [](const Tensor<float>& t, const std::vector<int>& perm) {
    std::vector<float> v(t.values().begin(), t.values().end());
    const std::size_t hw = 256;
    for (int c = 0; c < 8; ++c) {
      std::copy_n(t.values().begin() + static_cast<std::ptrdiff_t>((4 + perm[c]) * hw), hw,
                  v.begin() + static_cast<std::ptrdiff_t>((4 + c) * hw));
    }
    return Tensor<float>(t.shape(), std::move(v));
  };
  const std::vector<int> perm = {3, 0, 7, 1, 6, 2, 5, 4};
  std::vector<int> inv(8);
  for (int i = 0; i < 8; ++i) inv[perm[i]] = i;
  NoGradGuard ng;
  const auto base = m.forward(x, ForwardMode::eval()).logits;
  const auto px = permute(x, perm);
  CHECK_FALSE(fst::bitwise_equal(m.forward(px, ForwardMode::eval()).logits.values(), base.values()));
  CHECK(fst::bitwise_equal(m.forward(permute(px, inv), ForwardMode::eval()).logits.values(), base.values()));
}

TEST_CASE("zeroing weather inputs leaves fuel-branch activations untouched") {
  Pcg32 rng(8);
  auto m = build<float>(cfg_of(Arch::FireSenseNet), 9);
  auto x = random_tensor({1, 12, 16, 16}, rng);
  auto z = x.detach();
  for (std::size_t i = 4 * 256; i < 12 * 256; ++i) z.mutable_values()[i] = 0.0f;
  NoGradGuard ng;
  auto a = m.forward(x, ForwardMode::eval());
  auto b = m.forward(z, ForwardMode::eval());
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(fst::bitwise_equal(a.fuel_features[s].values(), b.fuel_features[s].values()));
    CHECK_FALSE(fst::bitwise_equal(a.weather_features[s].values(), b.weather_features[s].values()));
  }
  CHECK_FALSE(fst::bitwise_equal(a.logits.values(), b.logits.values()));
}

TEST_CASE("horizontal flip equivariance with mirror-symmetric kernels") {
  // The baseline has no strided convolutions, so with left-right symmetric
  // kernels the whole network commutes with a horizontal flip.
  auto m = build<float>(cfg_of(Arch::BaselineCNN), 10);
  m.for_each_parameter([](const std::string&, Tensor<float>& t) {
    if (t.rank() != 4) return;
    const auto k = t.dim(3);
    auto v = t.mutable_values();
    for (std::int64_t row = 0; row < t.numel() / k; ++row)
      for (std::int64_t j = 0; j < k / 2; ++j) v[static_cast<std::size_t>(row * k + k - 1 - j)] = v[static_cast<std::size_t>(row * k + j)];
  });
  Pcg32 rng(11);
  auto x = random_tensor({1, 12, 16, 16}, rng);
  auto flip = [](const Tensor<float>& t) {
    std::vector<float> v(t.values().size());
    const auto w = t.dim(t.rank() - 1);
    for (std::int64_t r = 0; r < t.numel() / w; ++r)
      for (std::int64_t j = 0; j < w; ++j) v[static_cast<std::size_t>(r * w + j)] = t.values()[static_cast<std::size_t>(r * w + w - 1 - j)];
    return Tensor<float>(t.shape(), std::move(v));
  };
  NoGradGuard ng;
  auto y = m.forward(x, ForwardMode::eval()).logits;
  auto yf = flip(m.forward(flip(x), ForwardMode::eval()).logits);
  double worst = 0;
  for (std::size_t i = 0; i < y.values().size(); ++i) worst = std::max(worst, double(std::abs(y.values()[i] - yf.values()[i])));
  CHECK(worst < 1e-4);
}

TEST_CASE("model config validation") {
  CHECK_THROWS_AS(build<float>(cfg_of(Arch::FireSenseNet, 0.3), 0), ConfigError);
  CHECK_THROWS_AS(build<float>(cfg_of(Arch::FireSenseNet, 0.25, 1.0), 0), ConfigError);
  CHECK_THROWS_AS(parse_arch("segformer"), ConfigError);
  CHECK(parse_arch("concat") == Arch::FireSenseNetConcat);
  auto m = build<float>(cfg_of(Arch::FireSenseNet), 0);
  NoGradGuard ng;
  CHECK_THROWS_AS(m.forward(Tensor<float>({1, 11, 16, 16}, 0.0f), ForwardMode::eval()), DimensionError);
}
