#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "firesense/error.hpp"
#include "firesense/metrics.hpp"
#include "firesense/rng.hpp"
#include "oracles.hpp"

using namespace firesense;

namespace {

using Fixture = fst::InflationFixture;

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_CASE("confusion on the 4x4 copy-prev fixture") {
  const Fixture f;
  const auto clean = confusion(f.prev, f.prev, f.target, Protocol::Clean, 0.5);
  CHECK(clean == Confusion{0, 4, 2, 10});
  CHECK(prf1(clean).f1 == 0.0);
  const auto infl = confusion(f.prev, f.prev, f.target, Protocol::Inflated, 0.5);
  CHECK(infl == Confusion{4, 0, 2, 10});
  CHECK(prf1(infl).f1 == 0.8);
}

TEST_CASE("perfect prediction and exclusion") {
  const std::vector<std::int8_t> y = {1, 0, -1, 1};
  const std::vector<float> p = {1.0f, 0.0f, 1.0f, 1.0f};
  const auto c = confusion(p, y, 0.5);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(c.included() == 3);
  CHECK_THROWS_AS(confusion(p, std::vector<std::int8_t>{1, 0}, 0.5), DimensionError);
}

TEST_CASE("prf1 conventions") {
  const auto a = prf1({2, 1, 1, 0});
  CHECK(a.precision == doctest::Approx(2.0 / 3));
  CHECK(a.recall == doctest::Approx(2.0 / 3));
  CHECK(a.f1 == doctest::Approx(2.0 / 3));
  const auto z = prf1({0, 0, 0, 5});
  CHECK(z.precision == 0.0);
  CHECK(z.recall == 0.0);
  CHECK(z.f1 == 0.0);
  const auto o = prf1({7, 0, 0, 3});
  CHECK(o.precision == 1.0);
  CHECK(o.recall == 1.0);
  CHECK(o.f1 == 1.0);
}

TEST_CASE("average precision fixtures") {
  const std::vector<std::int8_t> y = {1, 0, 1, 0};
  const std::vector<float> s = {0.9f, 0.8f, 0.7f, 0.1f};
  const auto ap = auc_pr(s, y);
  REQUIRE(ap.defined);
  CHECK(std::abs(ap.value - (1.0 + 2.0 / 3.0) / 2.0) < 1e-9);
  CHECK(std::abs(ap.value - 0.8333) < 1e-4);

  CHECK(auc_pr(std::vector<float>{0.9f, 0.1f}, std::vector<std::int8_t>{1, 0}).value == 1.0);

  std::vector<float> scores(100);
  std::vector<std::int8_t> labels(100, 0);
  for (std::size_t i = 0; i < 100; ++i) scores[i] = static_cast<float>(100 - i) / 100.0f;
  labels[99] = 1;
  CHECK(std::abs(auc_pr(scores, labels).value - 0.01) < 1e-12);

  // -1 pixels are skipped
  CHECK(auc_pr(std::vector<float>{0.99f, 0.9f, 0.1f}, std::vector<std::int8_t>{-1, 1, 0}).value == 1.0);

  const auto none = auc_pr(std::vector<float>{0.3f}, std::vector<std::int8_t>{0});
  CHECK_FALSE(none.defined);
  CHECK(none.value == kUndefinedAp);
}

TEST_CASE("AP is bounded and reaches 1 iff positives outrank negatives") {
  Pcg32 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> s(30);
    std::vector<std::int8_t> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      s[i] = static_cast<float>(rng.uniform());
      y[i] = static_cast<std::int8_t>(rng.below(3)) - 1;
    }
    const auto ap = auc_pr(s, y);
    if (!ap.defined) continue;
    CHECK(ap.value >= 0.0);
    CHECK(ap.value <= 1.0);
    float min_pos = 2.0f, max_neg = -1.0f;
    for (std::size_t i = 0; i < 30; ++i) {
      if (y[i] == 1) min_pos = std::min(min_pos, s[i]);
      if (y[i] == 0) max_neg = std::max(max_neg, s[i]);
    }
    CHECK((ap.value == 1.0) == (min_pos > max_neg));
  }
}

TEST_CASE("threshold sweep") {
  const auto th = sweep_thresholds();
  REQUIRE(th.size() == 19);
  CHECK(th.front() == doctest::Approx(0.05));
  CHECK(th.back() == doctest::Approx(0.95));

  const std::vector<float> p = {0.1f, 0.6f, 0.9f};
  const std::vector<float> prev(3, 0.0f);
  const auto s = threshold_sweep(p, prev, std::vector<std::int8_t>{0, 1, 1}, Protocol::Clean);
  CHECK(s.rows.size() == 19);
  CHECK(s.best_row().metrics.f1 == 1.0);
  CHECK(s.best_row().threshold == doctest::Approx(0.15));
  for (const auto& r : s.rows) {
    const bool perfect = r.threshold > 0.1 + 1e-9 && r.threshold <= 0.6 + 1e-9;
    CHECK((r.metrics.f1 == 1.0) == perfect);
  }

  const auto z = threshold_sweep(p, prev, std::vector<std::int8_t>{0, 0, 0}, Protocol::Clean);
  for (const auto& r : z.rows) CHECK(r.metrics.f1 == 0.0);
  CHECK(z.best_row().threshold == doctest::Approx(0.05));
}

TEST_CASE("confusion equals a naive per-pixel oracle") { CHECK(fst::metric_oracle_mismatches(1000, 2024) == 0); }

TEST_CASE("clean metrics ignore probabilities at excluded pixels") {
  Pcg32 rng(77);
  PooledPredictions a;
  std::vector<float> p(256), prev(256);
  std::vector<std::int8_t> y(256);
  for (std::size_t i = 0; i < 256; ++i) {
    p[i] = static_cast<float>(rng.uniform());
    prev[i] = rng.bernoulli(0.1) ? 1.0f : 0.0f;
    y[i] = static_cast<std::int8_t>(rng.below(3)) - 1;
  }
  a.append(p, prev, y);
  PooledPredictions b = a;
  for (std::size_t i = 0; i < 256; ++i)
    if (y[i] < 0) b.probs[i] = static_cast<float>(rng.uniform());
  const auto ra = evaluate("m", a, Protocol::Clean), rb = evaluate("m", b, Protocol::Clean);
  CHECK(ra.counts == rb.counts);
  CHECK(ra.threshold == rb.threshold);
  CHECK(ra.auc_pr.value == rb.auc_pr.value);
}

TEST_CASE("inflation audit") {
  const Fixture f;
  PooledPredictions pred;
  pred.append(f.prev, f.prev, f.target);
  const auto row = inflation_audit("dummy-copy-prev", pred);
  CHECK(row.clean.metrics.f1 == 0.0);
  CHECK(row.inflated.metrics.f1 == 0.8);
  CHECK_FALSE(row.inflation_defined);

  Pcg32 rng(5);
  PooledPredictions q;
  std::vector<float> p(64), prev(64, 0.0f);
  std::vector<std::int8_t> y(64);
  for (std::size_t i = 0; i < 64; ++i) {
    p[i] = static_cast<float>(rng.uniform());
    y[i] = static_cast<std::int8_t>(p[i] > 0.4f ? 1 : 0);
  }
  q.append(p, prev, y);
  // no previous fire and no -1: both protocols see the same target
  const auto same = inflation_audit("m", q);
  REQUIRE(same.inflation_defined);
  CHECK(same.inflation_pct == 0.0);
}

TEST_CASE("protocol parsing") {
  CHECK(parse_protocol("clean") == Protocol::Clean);
  CHECK(parse_protocol("inflated") == Protocol::Inflated);
  CHECK_THROWS_AS(parse_protocol("both"), ConfigError);
  CHECK(to_string(Protocol::Inflated) == "inflated");
}

TEST_CASE("csv outputs carry headers") {
  const auto dir = std::filesystem::temp_directory_path() / "firesense_metrics_csv";
  std::filesystem::create_directories(dir);
  const Fixture f;
  PooledPredictions pred;
  pred.append(f.prev, f.prev, f.target);
  SweepResult sweep;
  const auto rep = evaluate("dummy-copy-prev", pred, Protocol::Clean, &sweep);
  write_metrics_csv(dir / "m.csv", {rep});
  write_sweep_csv(dir / "s.csv", "dummy-copy-prev", Protocol::Clean, sweep);
  write_audit_csv(dir / "a.csv", {inflation_audit("dummy-copy-prev", pred)});
  CHECK(first_line(dir / "m.csv").rfind("model,protocol,threshold", 0) == 0);
  CHECK(first_line(dir / "s.csv").find("threshold") != std::string::npos);
  CHECK(first_line(dir / "a.csv").find("inflation") != std::string::npos);
  std::ifstream in(dir / "s.csv");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 20);
  std::filesystem::remove_all(dir);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.8, 1.0 / 3.0, 0.0, 1e-17, 123456.789}) CHECK(std::stod(format_number(v)) == v);
}
