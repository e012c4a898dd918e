#include "firesense/gradcheck_suite.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "firesense/gradcheck.hpp"
#include "firesense/losses.hpp"
#include "firesense/model.hpp"
#include "firesense/nn.hpp"
#include "firesense/ops.hpp"

namespace firesense {

namespace {

using TD = Tensor<double>;

TD random_tensor(Shape shape, Pcg32& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return TD(std::move(shape), std::move(v));
}

// Values bounded away from 0 so a finite-difference step never crosses a ReLU kink.
TD away_from_zero(Shape shape, Pcg32& rng) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) {
    const double m = rng.uniform(0.05, 1.0);
    x = rng.bernoulli(0.5) ? m : -m;
  }
  return TD(std::move(shape), std::move(v));
}

// Distinct values at least 0.01 apart, so no 2x2 window has a near-tie.
TD spread_values(Shape shape, Pcg32& rng) {
  const auto n = static_cast<std::size_t>(numel(shape));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(static_cast<std::uint32_t>(i + 1))]);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 0.01 * static_cast<double>(perm[i]) - 0.005 * static_cast<double>(n);
  return TD(std::move(shape), std::move(v));
}

// Random linear functional of y: sum(y * r) with a fixed r.
TD project(const TD& y, Pcg32& rng) {
  const TD r = random_tensor(y.shape(), rng);
  return sum(mul(y, r));
}

struct Accumulator {
  GradcheckRow row;
  void add(const GradCheckResult& r) {
    row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
    row.coordinates += r.coordinates;
    row.skipped += r.skipped;
    row.trials += 1;
  }
};

template <typename Layer>
std::vector<TD> params_of(Layer& layer) {
  std::vector<TD> out;
  layer.visit("", [&](const std::string&, TD& p) { out.push_back(p); });
  return out;
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck_suite(const GradcheckSuiteOptions& opt) {
  std::vector<GradcheckRow> rows;
  const double h = opt.step;

  auto family = [&](const std::string& name, int trials, const std::function<GradCheckResult(Pcg32&)>& one) {
    Accumulator acc;
    acc.row.family = name;
    for (int t = 0; t < trials; ++t) {
      Pcg32 rng(derive_seed(opt.seed, std::hash<std::string>{}(name) ^ static_cast<std::uint64_t>(t)), 7);
      acc.add(one(rng));
    }
    rows.push_back(acc.row);
  };

  family("conv2d", opt.trials, [&](Pcg32& rng) {
    const int stride = 1 + static_cast<int>(rng.below(2));
    TD x = random_tensor({2, 5, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(conv2d(x, w, b, stride, 1), r); }, {x, w, b}, h);
  });
  family("relu", opt.trials, [&](Pcg32& rng) {
    TD x = away_from_zero({3, 4, 4}, rng);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(relu(x), r); }, {x}, h);
  });
  family("sigmoid", opt.trials, [&](Pcg32& rng) {
    TD x = random_tensor({3, 4, 4}, rng, 3.0);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(sigmoid(x), r); }, {x}, h);
  });
  family("maxpool2x2", opt.trials, [&](Pcg32& rng) {
    TD x = spread_values({2, 4, 6}, rng);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(maxpool2x2(x), r); }, {x}, h);
  });
  family("upsample_bilinear2x", opt.trials, [&](Pcg32& rng) {
    TD x = random_tensor({2, 3, 5}, rng);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(upsample_bilinear2x(x), r); }, {x}, h);
  });
  family("batch_norm", opt.trials, [&](Pcg32& rng) {
    const bool training = rng.bernoulli(0.5);
    TD x = random_tensor({2, 3, 4, 4}, rng), g = random_tensor({3}, rng), b = random_tensor({3}, rng);
    RunningStats<double> stats(3);
    for (auto& v : stats.var) v = rng.uniform(0.5, 2.0);
    for (auto& m : stats.mean) m = rng.uniform(-0.5, 0.5);
    const RunningStats<double> frozen = stats;
    Pcg32 r2 = rng;
    return gradient_check(
        [&] {
          RunningStats<double> s = frozen;
          Pcg32 r = r2;
          return project(batch_norm(x, g, b, s, training), r);
        },
        {x, g, b}, h);
  });
  family("dropout", opt.trials, [&](Pcg32& rng) {
    TD x = random_tensor({2, 4, 4}, rng);
    std::vector<std::uint8_t> keep(static_cast<std::size_t>(x.numel()));
    for (auto& k : keep) k = rng.bernoulli(0.7) ? 1 : 0;
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(dropout_with_mask(x, 0.3, keep), r); }, {x}, h);
  });
  family("concat_slice", opt.trials, [&](Pcg32& rng) {
    TD a = random_tensor({2, 3, 3}, rng), b = random_tensor({3, 3, 3}, rng);
    Pcg32 r2 = rng;
    return gradient_check(
        [&] {
          Pcg32 r = r2;
          const TD c = concat_channels(a, b);
          return add(project(c, r), project(slice_channels(c, 1, 4), r));
        },
        {a, b}, h);
  });
  family("elementwise", opt.trials, [&](Pcg32& rng) {
    TD a = random_tensor({2, 3, 3}, rng), b = random_tensor({2, 3, 3}, rng), g = random_tensor({1, 3, 3}, rng);
    Pcg32 r2 = rng;
    return gradient_check(
        [&] {
          Pcg32 r = r2;
          TD y = add(mul(a, b), sub(a, b));
          y = mul_channel_broadcast(y, g);
          return project(y, r);
        },
        {a, b, g}, h);
  });
  family("scalar_ops", opt.trials, [&](Pcg32& rng) {
    TD x = random_tensor({2, 3, 3}, rng);
    Pcg32 r2 = rng;
    return gradient_check(
        [&] {
          Pcg32 r = r2;
          return project(rsub_scalar(1.0, mul_scalar(add_scalar(x, 0.5), -1.7)), r);
        },
        {x}, h);
  });
  family("reductions", opt.trials, [&](Pcg32& rng) {
    TD x = random_tensor({2, 3, 3}, rng);
    return gradient_check([&] { return add(mul(sum(x), sum(x)), mean(mul(x, x))); }, {x}, h);
  });
  family("reshape", opt.trials, [&](Pcg32& rng) {
    TD x = random_tensor({2, 3, 4}, rng);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(reshape(x, Shape{6, 4}), r); }, {x}, h);
  });

  auto loss_family = [&](const std::string& name, auto loss_fn) {
    family(name, opt.trials, [&](Pcg32& rng) {
      TD z = random_tensor({2, 1, 4, 4}, rng, 3.0);
      std::vector<double> t(static_cast<std::size_t>(z.numel()));
      for (auto& v : t) v = rng.bernoulli(0.3) ? rng.uniform(0.8, 0.99) : rng.uniform(0.01, 0.03);
      t[3] = -1.0;
      t[20] = -1.0;
      const auto m = valid_mask(std::span<const double>(t));
      return gradient_check([&] { return loss_fn(z, std::span<const double>(t), std::span<const std::uint8_t>(m)); },
                            {z}, h);
    });
  };
  loss_family("wbce", [](const TD& z, std::span<const double> t, std::span<const std::uint8_t> m) {
    return wbce_loss(z, t, m);
  });
  loss_family("dice", [](const TD& z, std::span<const double> t, std::span<const std::uint8_t> m) {
    return dice_loss(z, t, m);
  });
  loss_family("focal", [](const TD& z, std::span<const double> t, std::span<const std::uint8_t> m) {
    return focal_loss(z, t, m);
  });
  loss_family("composite_loss", [](const TD& z, std::span<const double> t, std::span<const std::uint8_t> m) {
    return composite_loss(z, t, m).total;
  });

  family("conv_bn_relu_pipeline", std::max(1, opt.trials / 5), [&](Pcg32& rng) {
    auto layer = ConvBnRelu<double>::make("block", 4, 4, 3, 1, rng);
    for (auto& m : layer.bn.stats.mean) m = rng.uniform(-0.5, 0.5);
    for (auto& v : layer.bn.stats.var) v = rng.uniform(0.5, 2.0);
    TD x = random_tensor({1, 4, 8, 8}, rng);
    auto wrt = params_of(layer);
    wrt.push_back(x);
    return gradient_check([&] { return sum(layer(x, ForwardMode::eval())); }, wrt, h);
  });
  // Batch statistics: the conv bias is cancelled by the batch mean, so its
  // gradient is identically zero and it is left out of the comparison.
  family("conv_bn_relu_pipeline_train", std::max(1, opt.trials / 5), [&](Pcg32& rng) {
    auto layer = ConvBnRelu<double>::make("block", 4, 4, 3, 1, rng);
    TD x = random_tensor({2, 4, 8, 8}, rng);
    std::vector<TD> wrt = {layer.conv.weight, layer.bn.gamma, layer.bn.beta, x};
    const auto frozen = layer.bn.stats;
    return gradient_check(
        [&] {
          layer.bn.stats = frozen;
          return sum(layer(x, ForwardMode{true, false, nullptr}));
        },
        wrt, h);
  });
  family("residual_block", std::max(1, opt.trials / 5), [&](Pcg32& rng) {
    auto block = ResidualBlock<double>::make("res", 4, 6, 3, 1, rng);
    TD x = random_tensor({1, 4, 6, 6}, rng);
    auto wrt = params_of(block);
    wrt.push_back(x);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(block(x, ForwardMode::eval()), r); }, wrt, h);
  });
  family("cafim", std::max(1, opt.trials / 5), [&](Pcg32& rng) {
    auto cafim = Cafim<double>::make("cafim", 4, rng);
    TD f = random_tensor({1, 4, 4, 4}, rng), w = random_tensor({1, 4, 4, 4}, rng);
    auto wrt = params_of(cafim);
    wrt.push_back(f);
    wrt.push_back(w);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(cafim(f, w).fused, r); }, wrt, h);
  });
  family("decoder_block", std::max(1, opt.trials / 5), [&](Pcg32& rng) {
    auto dec = DecoderBlock<double>::make("dec", 4, 2, 3, rng);
    TD x = random_tensor({1, 4, 3, 3}, rng), skip = random_tensor({1, 2, 6, 6}, rng);
    auto wrt = params_of(dec);
    wrt.push_back(x);
    wrt.push_back(skip);
    Pcg32 r2 = rng;
    return gradient_check([&] { Pcg32 r = r2; return project(dec(x, skip, ForwardMode::eval()), r); }, wrt, h);
  });

  if (opt.full_model) {
    family("firesensenet_composite", 1, [&](Pcg32& rng) {
      ModelConfig cfg;
      cfg.width_mult = 0.25;
      auto model = build<double>(cfg, rng.next_u64());
      TD x = random_tensor({1, 12, 16, 16}, rng);
      std::vector<double> t(256);
      for (auto& v : t) v = rng.bernoulli(0.2) ? rng.uniform(0.8, 0.99) : rng.uniform(0.01, 0.03);
      const auto m = valid_mask(std::span<const double>(t));
      std::vector<TD> wrt;
      model.for_each_parameter([&](const std::string&, TD& p) { wrt.push_back(p); });
      wrt.push_back(x);
      return gradient_check(
          [&] {
            const auto fwd = model.forward(x, ForwardMode::eval());
            return composite_loss(fwd.logits, std::span<const double>(t), std::span<const std::uint8_t>(m)).total;
          },
          wrt, h, opt.full_model_coords_per_tensor);
    });
  }
  return rows;
}

}  // namespace firesense
