#include <doctest.h>

#include <cmath>
#include <array>
#include <limits>
#include <set>

#include "firesense/error.hpp"
#include "firesense/gradcheck.hpp"
#include "firesense/ops.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace firesense;
using fst::random_tensor;

using fst::conv_oracle;

TEST_CASE("conv2d all-ones box sum") {
  Tensor<float> x({1, 1, 3, 3}, 1.0f);
  Tensor<float> w({1, 1, 3, 3}, 1.0f);
  Tensor<float> b({1}, 0.0f);
  auto y = conv2d(x, w, b, 1, 1);
  CHECK(y.at({0, 0, 1, 1}) == 9.0f);
  CHECK(y.at({0, 0, 0, 0}) == 4.0f);
  CHECK(y.at({0, 0, 2, 2}) == 4.0f);
  CHECK(y.at({0, 0, 0, 1}) == 6.0f);
}

TEST_CASE("conv2d 1x1 identity kernel returns the input exactly") {
  Pcg32 rng(1);
  auto x = random_tensor({1, 1, 5, 7}, rng);
  auto y = conv2d(x, Tensor<float>({1, 1, 1, 1}, 1.0f), Tensor<float>({1}, 0.0f));
  CHECK(fst::bitwise_equal(x.values(), y.values()));
}

TEST_CASE("conv2d accepts CHW input") {
  Pcg32 rng(2);
  auto x = random_tensor({2, 5, 5}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto y = conv2d(x, w, b, 1, 1);
  REQUIRE(y.shape() == Shape{3, 5, 5});
  const auto ref = conv_oracle(Tensor<float>({1, 2, 5, 5}, fst::copy_of(x.values())), w, b, 1, 1);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.values()[i] - ref[i]) < 1e-6);
}

TEST_CASE("conv2d matches the quadruple-loop oracle on 100 random shapes") {
  const auto r = fst::conv_oracle_trials(100, 20240601);
  CHECK(r.shapes == 100);
  CHECK(r.worst < 1e-6);
}

TEST_CASE("conv2d errors") {
  Tensor<float> x({1, 2, 4, 4}, 1.0f);
  CHECK_THROWS_AS(conv2d(x, Tensor<float>({1, 3, 3, 3}, 1.0f), Tensor<float>()), DimensionError);
  CHECK_THROWS_AS(conv2d(x, Tensor<float>({1, 2, 2, 2}, 1.0f), Tensor<float>()), ConfigError);
  CHECK_THROWS_AS(conv2d(x, Tensor<float>({1, 2, 5, 5}, 1.0f), Tensor<float>(), 1, 0), ConfigError);
  CHECK_THROWS_AS(conv2d(x, Tensor<float>({2, 2, 3, 3}, 1.0f), Tensor<float>({3}, 0.0f)), DimensionError);
}

TEST_CASE("primitive fixed points") {
  CHECK(sigmoid(Tensor<float>::scalar(0.0f)).item() == 0.5f);
  CHECK(relu(Tensor<float>::scalar(-3.0f)).item() == 0.0f);
  CHECK(relu(Tensor<float>::scalar(2.5f)).item() == 2.5f);
  auto p = maxpool2x2(Tensor<float>({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4}));
  CHECK(p.shape() == Shape{1, 1, 1, 1});
  CHECK(p.item() == 4.0f);
}

TEST_CASE("bilinear upsample preserves constants and doubles dims") {
  Tensor<float> c({1, 3, 5, 4}, 2.75f);
  auto u = upsample_bilinear2x(c);
  CHECK(u.shape() == Shape{1, 3, 10, 8});
  for (auto v : u.values()) CHECK(v == 2.75f);
}

TEST_CASE("bilinear upsample uses half-pixel centers") {
  // 1x2 row [0, 1]: outputs sit at source x = -0.25, 0.25, 0.75, 1.25 (edge-clamped).
  auto u = upsample_bilinear2x(Tensor<double>({1, 1, 1, 2}, std::vector<double>{0.0, 1.0}));
  const std::vector<double> want = {0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) CHECK(u.at({0, 0, 0, i}) == doctest::Approx(want[static_cast<std::size_t>(i)]));
}

TEST_CASE("maxpool halves dims and rejects odd sizes") {
  Pcg32 rng(3);
  auto p = maxpool2x2(random_tensor({2, 3, 6, 8}, rng));
  CHECK(p.shape() == Shape{2, 3, 3, 4});
  CHECK_THROWS_AS(maxpool2x2(Tensor<float>({1, 1, 3, 4}, 0.0f)), DimensionError);
}

TEST_CASE("dropout is the identity outside training") {
  Pcg32 rng(4);
  auto x = random_tensor({2, 3, 4, 4}, rng);
  auto y = dropout(x, 0.3, &rng, false);
  CHECK(fst::bitwise_equal(x.values(), y.values()));
  CHECK_THROWS(dropout(x, 1.0, &rng, true));
  CHECK_THROWS(dropout(x, -0.1, &rng, true));
}

TEST_CASE("dropout uses inverted scaling") {
  Pcg32 rng(5);
  Tensor<float> x({1, 1, 64, 64}, 1.0f);
  auto y = dropout(x, 0.25, &rng, true);
  int kept = 0;
  for (auto v : y.values()) {
    CHECK((v == 0.0f || v == doctest::Approx(1.0f / 0.75f)));
    kept += v != 0.0f;
  }
  CHECK(kept > 2800);
  CHECK(kept < 3350);
}

TEST_CASE("concat channel law and slicing") {
  Pcg32 rng(6);
  auto a = random_tensor({2, 3, 4, 5}, rng);
  auto b = random_tensor({2, 2, 4, 5}, rng);
  auto c = concat_channels(a, b);
  CHECK(c.shape() == Shape{2, 5, 4, 5});
  CHECK(fst::bitwise_equal(slice_channels(c, 0, 3).values(), a.values()));
  CHECK(fst::bitwise_equal(slice_channels(c, 3, 5).values(), b.values()));
  CHECK_THROWS_AS(concat_channels(a, random_tensor({2, 2, 4, 4}, rng)), DimensionError);
}

TEST_CASE("batch norm updates running stats only in training") {
  Pcg32 rng(7);
  auto x = random_tensor({4, 2, 3, 3}, rng, 1.0, 3.0);
  Tensor<float> g({2}, 1.0f), b({2}, 0.0f);
  RunningStats<float> st(2);
  batch_norm(x, g, b, st, false);
  CHECK(st.mean == std::vector<float>{0.0f, 0.0f});
  auto y = batch_norm(x, g, b, st, true);
  CHECK(st.mean[0] > 0.1f);
  CHECK(st.mean[0] < 0.3f);
  // batch-normalized output has ~zero mean per channel
  double m0 = 0.0;
  for (std::int64_t n = 0; n < 4; ++n)
    for (std::int64_t i = 0; i < 3; ++i)
      for (std::int64_t j = 0; j < 3; ++j) m0 += y.at({n, 0, i, j});
  CHECK(std::abs(m0 / 36.0) < 1e-5);
}

TEST_CASE("backward: sum gives ones, sum(x*x) gives 2x") {
  Tensor<float> x({2, 3}, 0.7f);
  x.set_requires_grad();
  sum(x).backward();
  for (auto g : x.grad()) CHECK(g == 1.0f);

  Tensor<float> y({2}, std::vector<float>{1.0f, 2.0f});
  y.set_requires_grad();
  sum(y * y).backward();
  CHECK(y.grad()[0] == 2.0f);
  CHECK(y.grad()[1] == 4.0f);
}

TEST_CASE("backward accumulates across fan-out") {
  Tensor<double> x({3}, std::vector<double>{1, 2, 3});
  x.set_requires_grad();
  sum(add(mul(x, x), mul_scalar(x, 5.0))).backward();
  CHECK(x.grad()[0] == 7.0);
  CHECK(x.grad()[2] == 11.0);
}

TEST_CASE("backward on a non-scalar is a usage error") {
  Tensor<float> x({2}, 1.0f);
  x.set_requires_grad();
  CHECK_THROWS_AS(relu(x).backward(), UsageError);
}

TEST_CASE("non-finite values are rejected") {
  Tensor<float> x({2}, std::vector<float>{1.0f, std::numeric_limits<float>::infinity()});
  CHECK_THROWS_AS(relu(x), NumericalError);
}

TEST_CASE("graph order is creation order and each record is visited once") {
  Tensor<double> x({2}, 1.0);
  x.set_requires_grad();
  auto a = mul_scalar(x, 2.0);
  auto b = add(a, a);
  auto s = sum(add(b, a));
  const auto g = collect_graph(s);
  for (std::size_t i = 1; i < g.records.size(); ++i) CHECK(g.records[i - 1]->seq < g.records[i]->seq);
  std::set<const void*> seen(g.records.begin(), g.records.end());
  CHECK(seen.size() == g.records.size());
  s.backward();
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    Pcg32 rng(9);
    auto x = random_tensor({1, 3, 8, 8}, rng).set_requires_grad();
    auto w = random_tensor({4, 3, 3, 3}, rng).set_requires_grad();
    sum(sigmoid(conv2d(x, w, Tensor<float>(), 1, 1))).backward();
    auto gx = fst::copy_of(x.grad());
    auto gw = fst::copy_of(w.grad());
    gx.insert(gx.end(), gw.begin(), gw.end());
    return gx;
  };
  CHECK(run() == run());
}

TEST_CASE("gradient_check basics") {
  Pcg32 rng(10);
  auto x = random_tensor<double>({3, 4}, rng);
  CHECK(gradient_check([](const Tensor<double>& t) { return sum(t); }, x).max_rel_error < 1e-9);
  auto r = gradient_check([](const Tensor<double>& t) { return sum(sigmoid(t)); }, Tensor<double>({1}, 0.0));
  CHECK(r.analytic == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.numeric == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
}

TEST_CASE("gradient_check rejects a non-finite objective") {
  Tensor<double> x({1}, 0.0);
  CHECK_THROWS_AS(gradient_check(
                      [](const Tensor<double>& t) {
                        auto v = t.detach();
                        v.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
                        return sum(add(t, v));
                      },
                      x),
                  NumericalError);
}

TEST_CASE("conv->bn->relu->sum gradients match finite differences") {
  Pcg32 rng(11);
  auto x = random_tensor<double>({1, 4, 8, 8}, rng);
  auto w = random_tensor<double>({4, 4, 3, 3}, rng, -0.3, 0.3);
  auto b = random_tensor<double>({4}, rng);
  auto g = random_tensor<double>({4}, rng, 0.5, 1.5);
  auto be = random_tensor<double>({4}, rng);
  RunningStats<double> st(4);
  for (auto& v : st.var) v = rng.uniform(0.5, 2.0);
  const auto r = gradient_check(
      [&] { return sum(relu(batch_norm(conv2d(x, w, b, 1, 1), g, be, st, false))); }, {x, w, b, g, be});
  CHECK(r.max_rel_error < 1e-3);
  CHECK(r.coordinates > 0);
}
