#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "firesense/data.hpp"
#include "firesense/error.hpp"
#include "helpers.hpp"

using namespace firesense;

namespace {

Dataset random_dataset(std::size_t n, int h, int w, std::uint64_t seed) {
  Pcg32 rng(seed);
  Dataset ds;
  ds.height = h;
  ds.width = w;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = rng.next_u64();
    s.x.resize(ds.channels() * ds.pixels());
    for (auto& v : s.x) v = static_cast<float>(rng.uniform(-50.0, 50.0));
    s.y.resize(ds.pixels());
    for (auto& v : s.y) v = static_cast<std::int8_t>(static_cast<int>(rng.below(3)) - 1);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

TEST_CASE("schema") {
  CHECK(ChannelSchema::kNames.size() == 12);
  CHECK(ChannelSchema::index_of("PrevFireMask") == 3);
  CHECK(ChannelSchema::index_of("vs") == 5);
  CHECK_THROWS_AS(ChannelSchema::index_of("wind"), ConfigError);
  int fuel = 0;
  for (std::size_t c = 0; c < 12; ++c) fuel += ChannelSchema::group(c) == ChannelGroup::Fuel;
  CHECK(fuel == 4);
  std::set<std::string_view> unique(ChannelSchema::kNames.begin(), ChannelSchema::kNames.end());
  CHECK(unique.size() == 12);
}

TEST_CASE("container round trips") {
  Dataset empty;
  empty.height = 8;
  empty.width = 8;
  CHECK(decode(encode(empty)) == empty);

  const auto one = random_dataset(1, 16, 16, 1);
  const auto bytes = encode(one);
  CHECK(decode(bytes) == one);
  CHECK(encode(decode(bytes)) == bytes);

  for (std::uint64_t seed = 2; seed < 6; ++seed) {
    const auto ds = random_dataset(1 + seed, 8, 24, seed);
    CHECK(decode(encode(ds)) == ds);
  }
}

TEST_CASE("container header layout") {
  const auto ds = random_dataset(2, 8, 16, 7);
  const auto b = encode(ds);
  CHECK(std::string(b.begin(), b.begin() + 4) == "FSNW");
  CHECK(b[4] == kDatasetVersion);
  CHECK(b[5] == 0);
  CHECK(b[6] == 2);  // n_samples u32 LE
  CHECK(b[10] == 8);
  CHECK(b[12] == 16);
  CHECK(b[14] == 12);
  std::size_t header = 16;
  for (auto n : ChannelSchema::kNames) header += 2 + n.size();
  CHECK(b.size() == header + 2 * (8 + 12 * 128 * 4 + 128));
}

TEST_CASE("container errors carry offsets") {
  const auto ds = random_dataset(2, 8, 8, 8);
  auto b = encode(ds);

  auto bad_magic = b;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode(bad_magic), FormatError);

  auto bad_version = b;
  bad_version[4] = 9;
  try {
    decode(bad_version);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 4);
  }

  std::vector<std::uint8_t> truncated(b.begin(), b.end() - 100);
  try {
    decode(truncated);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("expected file length " + std::to_string(b.size())) != std::string::npos);
    CHECK(msg.find("actual " + std::to_string(truncated.size())) != std::string::npos);
  }

  auto trailing = b;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode(trailing), FormatError);

  auto bad_label = b;
  bad_label.back() = 5;
  CHECK_THROWS_AS(decode(bad_label), FormatError);
}

TEST_CASE("container file round trip") {
  const auto path = std::filesystem::temp_directory_path() / "firesense_test_roundtrip.fsnw";
  const auto ds = random_dataset(3, 8, 8, 9);
  write_dataset(path, ds);
  CHECK(read_dataset(path) == ds);
  std::filesystem::remove(path);
}

TEST_CASE("normalization formula, constant guard and exemption") {
  Dataset ds;
  ds.height = 2;
  ds.width = 2;
  Sample s;
  s.x.assign(12 * 4, 0.0f);
  s.y.assign(4, 0);
  // channel 0: values 3,3,7,7 -> mean 5, std 2
  s.x[0] = 3;
  s.x[1] = 3;
  s.x[2] = 7;
  s.x[3] = 7;
  for (int i = 0; i < 4; ++i) s.x[4 + i] = 4.5f;  // constant channel
  s.x[3 * 4 + 0] = 1.0f;                          // PrevFireMask
  ds.samples.push_back(s);
  const auto st = compute_norm_stats(ds);
  CHECK(st.mean[0] == 5.0);
  CHECK(st.std[0] == 2.0);
  std::vector<float> x(12 * 4, 0.0f);
  x[0] = 9.0f;
  x[4] = 4.5f;
  x[12] = 1.0f;
  normalize(x, 4, st);
  CHECK(x[0] == 2.0f);
  CHECK(x[4] == 0.0f);
  CHECK(x[12] == 1.0f);
  CHECK(is_normalization_exempt(ChannelSchema::kPrevFireMask));
  CHECK(normalized_mean(0, st) == 0.0);
  CHECK(normalized_mean(3, st) == doctest::Approx(0.25));
}

TEST_CASE("normalizing the training split standardizes it") {
  auto ds = generate_synthetic(12, 3, {.size = 32});
  const auto st = compute_norm_stats(ds);
  normalize(ds, st);
  const auto again = compute_norm_stats(ds);
  for (std::size_t c = 0; c < 12; ++c) {
    if (is_normalization_exempt(c)) continue;
    CHECK(std::abs(again.mean[c]) < 1e-4);
    CHECK(std::abs(again.std[c] - 1.0) < 1e-4);
  }
}

TEST_CASE("norm stats depend only on the training split") {
  const auto ds = generate_synthetic(40, 4, {.size = 16});
  auto s1 = split(ds, 1);
  auto s2 = s1;
  for (auto& smp : s2.val.samples) std::ranges::fill(smp.x, 123.0f);
  for (auto& smp : s2.test.samples) std::ranges::fill(smp.x, -7.0f);
  CHECK(fit_preprocessor(s1.train, {}).stats == fit_preprocessor(s2.train, {}).stats);
}

TEST_CASE("norm stats text file") {
  const auto path = std::filesystem::temp_directory_path() / "firesense_test_stats.csv";
  const auto st = compute_norm_stats(generate_synthetic(3, 5, {.size = 16}));
  write_norm_stats(path, st);
  CHECK(read_norm_stats(path) == st);
  std::filesystem::remove(path);
}

TEST_CASE("gaussian kernel and impulse response") {
  const auto k = gaussian_kernel(0.8);
  CHECK(k.size() == 7);  // radius ceil(2.4) = 3
  double s = 0;
  for (auto v : k) s += v;
  CHECK(std::abs(s - 1.0) < 1e-12);
  CHECK_THROWS_AS(gaussian_kernel(0.0), ConfigError);
  CHECK_THROWS_AS(gaussian_kernel(-1.0), ConfigError);

  const int n = 15;
  std::vector<double> img(n * n, 0.0);
  img[7 * n + 7] = 1.0;
  const auto out = gaussian_smooth(std::span<const double>(img), n, n, 0.8);
  // direct 2-D evaluation of the normalized separable kernel at the center
  double z = 0;
  for (int d = -3; d <= 3; ++d) z += std::exp(-d * d / (2 * 0.64));
  CHECK(std::abs(out[7 * n + 7] - 1.0 / (z * z)) < 1e-9);
  double total = 0;
  for (auto v : out) total += v;
  CHECK(std::abs(total - 1.0) < 1e-6);
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) CHECK(std::abs(out[(7 + dy) * n + 7 + dx] - k[dy + 3] * k[dx + 3]) < 1e-15);
}

TEST_CASE("gaussian smoothing preserves constants in the interior and is linear") {
  const int n = 20;
  std::vector<double> c(n * n, 3.5);
  const auto out = gaussian_smooth(std::span<const double>(c), n, n, 0.4);
  // radius ceil(3 * 0.4) = 2: pixels at least 2 from the border see no padding
  for (int y = 2; y < n - 2; ++y)
    for (int x = 2; x < n - 2; ++x) CHECK(std::abs(out[y * n + x] - 3.5) < 1e-12);

  Pcg32 rng(3);
  std::vector<float> a(n * n), b(n * n), mix(n * n);
  for (int i = 0; i < n * n; ++i) {
    a[i] = static_cast<float>(rng.uniform(-1, 1));
    b[i] = static_cast<float>(rng.uniform(-1, 1));
    mix[i] = 2.0f * a[i] - 0.5f * b[i];
  }
  const auto sa = gaussian_smooth(std::span<const float>(a), n, n, 0.8);
  const auto sb = gaussian_smooth(std::span<const float>(b), n, n, 0.8);
  const auto sm = gaussian_smooth(std::span<const float>(mix), n, n, 0.8);
  for (int i = 0; i < n * n; ++i) CHECK(std::abs(sm[i] - (2.0f * sa[i] - 0.5f * sb[i])) < 1e-6);
}

TEST_CASE("smoothing touches only PrevFireMask and wind speed") {
  auto ds = generate_synthetic(1, 6, {.size = 16});
  auto sm = ds;
  apply_smoothing(sm, SmoothingConfig{});
  for (std::size_t c = 0; c < 12; ++c) {
    const bool same = fst::bitwise_equal(ds.channel(0, c), sm.channel(0, c));
    CHECK(same == (c != ChannelSchema::kPrevFireMask && c != ChannelSchema::kWindSpeed));
  }
  auto off = ds;
  apply_smoothing(off, SmoothingConfig{.enabled = false});
  CHECK(off == ds);
}

TEST_CASE("soft labels respect the bounds over 10^6 draws") {
  Pcg32 rng(11);
  std::vector<std::int8_t> y(1000000);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<std::int8_t>(static_cast<int>(i % 3) - 1);
  const auto t = soft_labels(y, rng);
  bool ok = true;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0) ok = ok && t[i] >= 0.01f && t[i] <= 0.03f;
    if (y[i] == 1) ok = ok && t[i] >= 0.80f && t[i] <= 0.99f;
    if (y[i] == -1) ok = ok && t[i] == -1.0f;
  }
  CHECK(ok);
  const auto h = hard_labels(y);
  CHECK(h[0] == -1.0f);
  CHECK(h[1] == 0.0f);
  CHECK(h[2] == 1.0f);
}

TEST_CASE("flips are involutions and move labels with inputs") {
  auto ds = generate_synthetic(1, 12, {.size = 16});
  const Sample orig = ds.samples[0];
  Sample s = orig;
  flip_horizontal(s, 16, 16);
  CHECK(s.x[0] == orig.x[15]);
  CHECK(s.y[3] == orig.y[12]);
  flip_horizontal(s, 16, 16);
  CHECK(s == orig);
  flip_vertical(s, 16, 16);
  CHECK(s.y[0] == orig.y[15 * 16]);
  flip_vertical(s, 16, 16);
  CHECK(s == orig);

  // Joint transform: the pixel that held PrevFireMask=1 still lines up with its label.
  Sample t = orig;
  Pcg32 rng(1);
  for (int k = 0; k < 8; ++k) {
    Sample a = orig;
    const auto choice = augment_flip(a, 16, 16, rng);
    Sample b = orig;
    if (choice.horizontal) flip_horizontal(b, 16, 16);
    if (choice.vertical) flip_vertical(b, 16, 16);
    CHECK(a == b);
  }
  Pcg32 r1(5), r2(5);
  for (int k = 0; k < 20; ++k) {
    Sample a = orig, b = orig;
    const auto ca = augment_flip(a, 16, 16, r1);
    const auto cb = augment_flip(b, 16, 16, r2);
    CHECK(ca.horizontal == cb.horizontal);
    CHECK(ca.vertical == cb.vertical);
  }
}

TEST_CASE("synthetic generator contract") {
  const auto a = generate_synthetic(1000, 42, {.size = 64});
  const auto b = generate_synthetic(1000, 42, {.size = 64});
  CHECK(a == b);
  std::size_t fire = 0, total = 0;
  bool codomain = true, empty_seen = false, unknown_seen = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t prev = 0;
    for (auto v : a.channel(i, ChannelSchema::kPrevFireMask)) prev += v > 0.5f;
    empty_seen = empty_seen || prev == 0;
    for (auto v : a.samples[i].y) {
      codomain = codomain && (v == -1 || v == 0 || v == 1);
      fire += v == 1;
      unknown_seen = unknown_seen || v == -1;
      ++total;
    }
  }
  CHECK(codomain);
  CHECK(static_cast<double>(fire) / static_cast<double>(total) < 0.05);
  CHECK(fire > 0);
  CHECK(empty_seen);
  CHECK(unknown_seen);
  CHECK_THROWS_AS(generate_synthetic(0, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(1, 1, {.size = 12}), ConfigError);
}

TEST_CASE("synthetic targets are the newly burned ring") {
  const auto ds = generate_synthetic(50, 9, {.size = 32, .unknown_fraction = 0.0});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto prev = ds.channel(i, ChannelSchema::kPrevFireMask);
    for (std::size_t p = 0; p < ds.pixels(); ++p) {
      if (prev[p] > 0.5f) CHECK(ds.samples[i].y[p] == 0);
    }
  }
  // east bias: more new fire to the right of the old fire than to the left
  std::size_t right = 0, left = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto prev = ds.channel(i, ChannelSchema::kPrevFireMask);
    for (int r = 0; r < 32; ++r)
      for (int c = 2; c < 30; ++c) {
        if (ds.samples[i].y[r * 32 + c] != 1) continue;
        right += prev[r * 32 + c - 2] > 0.5f && prev[r * 32 + c - 1] < 0.5f;
        left += prev[r * 32 + c + 2] > 0.5f && prev[r * 32 + c + 1] < 0.5f;
      }
  }
  CHECK(right > left);
}

TEST_CASE("splits") {
  const auto s = split_indices(100, 3);
  CHECK(s.train.size() == 80);
  CHECK(s.val.size() == 10);
  CHECK(s.test.size() == 10);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 100);
  CHECK(*all.rbegin() == 99);
  const auto again = split_indices(100, 3);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK(split_indices(100, 4).train != s.train);
  CHECK_THROWS(split_indices(9, 0));
  const auto odd = split_indices(25, 1);
  CHECK(odd.train.size() == 21);
  CHECK(odd.val.size() == 2);

  const auto ds = generate_synthetic(30, 1, {.size = 8});
  const auto parts = split(ds, 3);
  std::set<std::uint64_t> ids;
  for (const auto* p : {&parts.train, &parts.val, &parts.test})
    for (const auto& smp : p->samples) ids.insert(smp.id);
  CHECK(ids.size() == 30);
}
