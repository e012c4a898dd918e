#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "firesense/rng.hpp"
#include "firesense/tensor.hpp"

namespace firesense {

// Differentiable operations. Spatial ops take NCHW tensors; conv2d and the
// pooling/upsampling ops also accept CHW and return CHW in that case.
// Everything is instantiated for float (training) and double (gradient checks).

/// Cross-correlation. `bias` may be undefined. Output size
/// (H + 2*padding - k) / stride + 1 must divide exactly.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// 2x2 max pooling, stride 2; spatial dims must be even. Ties go to the first
/// element in row-major window order.
template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x);

/// 2x bilinear upsampling, half-pixel centers (align_corners = false), edge clamped.
template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& x);

/// Per-channel running statistics for batch normalization.
template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  explicit RunningStats(std::size_t channels = 0) : mean(channels, T(0)), var(channels, T(1)) {}
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Normalizes over (N, H, W) per channel. Running statistics are updated only
/// when `training` is set (unbiased variance, like most frameworks).
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     RunningStats<T>& stats, bool training, BatchNormOptions opt = {});

/// Inverted dropout. Identity (the same node, untouched) when not training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Pcg32* rng, bool training);

/// Dropout with a caller-supplied keep mask (1 = keep); used by tests to freeze masks.
template <typename T>
Tensor<T> dropout_with_mask(const Tensor<T>& x, double p, const std::vector<std::uint8_t>& keep);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, end) of an NCHW tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// x[N,C,H,W] * gate[N,1,H,W], gate broadcast over channels.
template <typename T>
Tensor<T> mul_channel_broadcast(const Tensor<T>& x, const Tensor<T>& gate);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c);
/// c - x
template <typename T>
Tensor<T> rsub_scalar(T c, const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
  return sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) {
  return mul(a, b);
}

// FLOP accounting. When a recorder is installed on the current thread, ops
// report their cost under the innermost scope name.
struct FlopRecord {
  std::string scope;
  std::string op;
  std::int64_t flops = 0;
};

class FlopRecorder {
 public:
  FlopRecorder();
  ~FlopRecorder();
  FlopRecorder(const FlopRecorder&) = delete;
  FlopRecorder& operator=(const FlopRecorder&) = delete;

  const std::vector<FlopRecord>& records() const { return records_; }
  std::int64_t total() const;

  void add(const char* op, std::int64_t flops);

 private:
  std::vector<FlopRecord> records_;
  FlopRecorder* previous_;
};

/// Names the layer that subsequent ops belong to (nests with '.').
class FlopScope {
 public:
  explicit FlopScope(const std::string& name);
  ~FlopScope();
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  bool active_;
};

/// Cost model: conv = 2*k*k*Cin*Cout*H'*W'; elementwise = output size;
/// bilinear upsample = 8 * output size.
void record_flops(const char* op, std::int64_t flops);

/// While alive, hashes which piece of every piecewise-linear op was taken
/// (ReLU input signs, max-pool winners). Two evaluations with equal
/// fingerprints ran through the same linear pieces.
class BranchMonitor {
 public:
  BranchMonitor();
  ~BranchMonitor();
  BranchMonitor(const BranchMonitor&) = delete;
  BranchMonitor& operator=(const BranchMonitor&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  std::uint64_t count() const { return count_; }
  void mix(std::uint64_t v);

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
  std::uint64_t count_ = 0;
  BranchMonitor* previous_;
};

bool branch_monitor_active();
void record_branch(std::uint64_t v);

}  // namespace firesense
