#include <doctest.h>

#include <cmath>

#include "firesense/gradcheck.hpp"
#include "firesense/losses.hpp"
#include "firesense/ops.hpp"
#include "helpers.hpp"

using namespace firesense;

namespace {

constexpr double kLn2 = 0.69314718055994531;

Tensor<double> logits_of(std::vector<double> z) {
  const auto n = static_cast<std::int64_t>(z.size());
  return Tensor<double>({1, 1, 1, n}, std::move(z));
}

std::vector<std::uint8_t> all_valid(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

}  // namespace

TEST_CASE("valid mask comes from -1 labels only") {
  const std::vector<std::int8_t> y = {-1, 0, 1, -1};
  CHECK(valid_mask(y) == std::vector<std::uint8_t>{0, 1, 1, 0});
  const std::vector<float> t = {-1.0f, 0.02f, 0.9f, 0.0f};
  CHECK(valid_mask(std::span<const float>(t)) == std::vector<std::uint8_t>{0, 1, 1, 1});
}

TEST_CASE("wbce closed forms") {
  const std::vector<double> one = {1.0}, zero = {0.0};
  auto m = all_valid(1);
  CHECK(wbce_loss(logits_of({0.0}), std::span<const double>(one), m).item() == doctest::Approx(3 * kLn2).epsilon(1e-12));
  CHECK(wbce_loss(logits_of({0.0}), std::span<const double>(zero), m).item() == doctest::Approx(kLn2).epsilon(1e-12));
  // extreme logits stay finite (log-sum-exp form)
  CHECK(std::isfinite(wbce_loss(logits_of({-500.0}), std::span<const double>(one), m).item()));
}

TEST_CASE("empty valid mask gives zero and raises the flag") {
  const std::vector<double> t = {-1.0, -1.0};
  const std::vector<std::uint8_t> m = {0, 0};
  LossFlags flags;
  CHECK(wbce_loss(logits_of({1.0, 2.0}), std::span<const double>(t), m, 3.0, &flags).item() == 0.0);
  CHECK(flags.empty_samples == 1);
  CHECK(dice_loss(logits_of({1.0, 2.0}), std::span<const double>(t), m, 1.0, &flags).item() == 0.0);
  CHECK(focal_loss(logits_of({1.0, 2.0}), std::span<const double>(t), m, 2.0, &flags).item() == 0.0);
  CHECK(flags.empty_samples == 3);
  auto c = composite_loss(logits_of({1.0, 2.0}), std::span<const double>(t), m);
  CHECK(c.total.item() == 0.0);
  CHECK(c.flags.empty_samples > 0);
}

TEST_CASE("dice closed forms and mask exclusion") {
  const std::size_t n = 16;
  std::vector<double> ones(n, 1.0), zeros(n, 0.0);
  auto m = all_valid(n);
  // p ~ 1 everywhere, t = 1: loss <= eps / (2n + eps)
  const auto perfect = dice_loss(logits_of(std::vector<double>(n, 40.0)), std::span<const double>(ones), m).item();
  CHECK(perfect >= 0.0);
  CHECK(perfect <= 1.0 / (2.0 * n + 1.0));
  // p = 1, t = 0: 1 - eps/(n + eps)
  const auto miss = dice_loss(logits_of(std::vector<double>(n, 40.0)), std::span<const double>(zeros), m).item();
  CHECK(miss == doctest::Approx(1.0 - 1.0 / (n + 1.0)).epsilon(1e-12));

  Pcg32 rng(1);
  std::vector<double> z(n), t(n);
  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.uniform(-3, 3);
    t[i] = rng.uniform();
    mask[i] = i % 3 != 0;
  }
  auto z2 = z;
  for (std::size_t i = 0; i < n; i += 3) z2[i] += 50.0;
  for (auto fn : {0, 1, 2}) {
    auto eval = [&](const std::vector<double>& logits) {
      auto l = logits_of(logits).set_requires_grad();
      Tensor<double> out = fn == 0   ? wbce_loss(l, std::span<const double>(t), mask)
                           : fn == 1 ? dice_loss(l, std::span<const double>(t), mask)
                                     : focal_loss(l, std::span<const double>(t), mask);
      out.backward();
      return std::pair{out.item(), fst::copy_of(l.grad())};
    };
    const auto a = eval(z), b = eval(z2);
    CHECK(a.first == b.first);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) CHECK(std::abs(a.second[i] - b.second[i]) < 1e-9);
      else CHECK(a.second[i] == 0.0);
    }
  }
}

TEST_CASE("focal closed forms") {
  const std::vector<double> one = {1.0};
  auto m = all_valid(1);
  CHECK(focal_loss(logits_of({0.0}), std::span<const double>(one), m).item() == doctest::Approx(0.25 * kLn2).epsilon(1e-12));

  Pcg32 rng(2);
  std::vector<double> z(32), t(32);
  for (std::size_t i = 0; i < 32; ++i) {
    z[i] = rng.uniform(-4, 4);
    t[i] = rng.uniform();
  }
  auto mm = all_valid(32);
  const double f0 = focal_loss(logits_of(z), std::span<const double>(t), mm, 0.0).item();
  const double bce = wbce_loss(logits_of(z), std::span<const double>(t), mm, 1.0).item();
  CHECK(std::abs(f0 - bce) < 1e-6);

  // p_t = 0.99 versus p_t = 0.5
  const double z99 = std::log(0.99 / 0.01);
  const double easy = focal_loss(logits_of({z99}), std::span<const double>(one), m).item();
  const double hard = focal_loss(logits_of({0.0}), std::span<const double>(one), m).item();
  CHECK(easy < 1e-3 * hard);
}

TEST_CASE("composite recombines, terms are nonnegative, and gradients are the weighted sum") {
  Pcg32 rng(3);
  const std::size_t n = 12 * 8 * 8;
  std::vector<double> t(n);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = rng.uniform(-3, 3);
    const auto u = rng.below(10);
    t[i] = u == 0 ? -1.0 : (u < 4 ? rng.uniform(0.8, 0.99) : rng.uniform(0.01, 0.03));
  }
  const auto mask = valid_mask(std::span<const double>(t));
  auto logits = Tensor<double>({12, 1, 8, 8}, z);
  auto c = composite_loss(logits, std::span<const double>(t), mask);
  CHECK(c.wbce.item() >= 0);
  CHECK(c.dice.item() >= 0);
  CHECK(c.focal.item() >= 0);
  CHECK(std::abs(c.total.item() - (0.4 * c.wbce.item() + 0.3 * c.dice.item() + 0.3 * c.focal.item())) < 1e-7);

  auto grad_of = [&](auto fn) {
    auto l = Tensor<double>({12, 1, 8, 8}, z).set_requires_grad();
    fn(l).backward();
    return fst::copy_of(l.grad());
  };
  const auto gc = grad_of([&](auto& l) { return composite_loss(l, std::span<const double>(t), mask).total; });
  const auto gw = grad_of([&](auto& l) { return wbce_loss(l, std::span<const double>(t), mask); });
  const auto gd = grad_of([&](auto& l) { return dice_loss(l, std::span<const double>(t), mask); });
  const auto gf = grad_of([&](auto& l) { return focal_loss(l, std::span<const double>(t), mask); });
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(gc[i] - (0.4 * gw[i] + 0.3 * gd[i] + 0.3 * gf[i])) < 1e-12);

  const auto r = gradient_check(
      [&](const Tensor<double>& l) { return composite_loss(l, std::span<const double>(t), mask).total; }, logits);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("wbce strictly decreases in z for t = 1") {
  const std::vector<double> one = {1.0};
  auto m = all_valid(1);
  double prev = std::numeric_limits<double>::infinity();
  for (double z = -20; z <= 20; z += 0.25) {
    const double v = wbce_loss(logits_of({z}), std::span<const double>(one), m).item();
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("perfect prediction limit") {
  std::vector<double> t(64), z(64);
  for (std::size_t i = 0; i < 64; ++i) {
    t[i] = i % 5 == 0 ? 1.0 : 0.0;
    z[i] = t[i] > 0.5 ? 20.0 : -20.0;
  }
  auto m = all_valid(64);
  CHECK(composite_loss(logits_of(z), std::span<const double>(t), m).total.item() < 1e-3);
}

TEST_CASE("losses average per sample then over the batch") {
  // Sample 0 has 1 valid pixel, sample 1 has 3: the loss is the mean of the two per-sample means.
  const std::vector<double> t = {1.0, -1.0, -1.0, -1.0, 0.0, 0.0, 0.0, -1.0};
  const auto m = valid_mask(std::span<const double>(t));
  auto l = Tensor<double>({2, 1, 2, 2}, std::vector<double>(8, 0.0));
  CHECK(wbce_loss(l, std::span<const double>(t), m).item() == doctest::Approx((3 * kLn2 + kLn2) / 2).epsilon(1e-12));
}
