#include "firesense/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "firesense/kernels.hpp"

namespace firesense {

// ---------------------------------------------------------------------------
// FLOP accounting

namespace {
thread_local FlopRecorder* g_recorder = nullptr;
thread_local std::vector<std::string> g_scopes;
}  // namespace

FlopRecorder::FlopRecorder() : previous_(g_recorder) { g_recorder = this; }
FlopRecorder::~FlopRecorder() { g_recorder = previous_; }

std::int64_t FlopRecorder::total() const {
  std::int64_t t = 0;
  for (const auto& r : records_) t += r.flops;
  return t;
}

void FlopRecorder::add(const char* op, std::int64_t flops) {
  std::string scope;
  for (const auto& s : g_scopes) scope += scope.empty() ? s : "." + s;
  records_.push_back({std::move(scope), op, flops});
}

FlopScope::FlopScope(const std::string& name) : active_(g_recorder != nullptr) {
  if (active_) g_scopes.push_back(name);
}
FlopScope::~FlopScope() {
  if (active_) g_scopes.pop_back();
}

void record_flops(const char* op, std::int64_t flops) {
  if (g_recorder) g_recorder->add(op, flops);
}

// ---------------------------------------------------------------------------
// branch fingerprints

namespace {
thread_local BranchMonitor* g_monitor = nullptr;
}  // namespace

BranchMonitor::BranchMonitor() : previous_(g_monitor) { g_monitor = this; }
BranchMonitor::~BranchMonitor() { g_monitor = previous_; }

void BranchMonitor::mix(std::uint64_t v) {
  hash_ = (hash_ ^ v) * 0x100000001b3ULL;
  ++count_;
}

bool branch_monitor_active() { return g_monitor != nullptr; }

void record_branch(std::uint64_t v) {
  if (g_monitor) g_monitor->mix(v);
}

namespace {

// ---------------------------------------------------------------------------
// helpers

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> ts) {
  if (!grad_enabled()) return false;
  for (const auto* t : ts) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Wraps freshly computed values into a tensor, attaching the backward rule when
/// any parent participates in differentiation.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const char* op,
                      std::initializer_list<const Tensor<T>*> parents,
                      std::function<void(Node<T>&)> rule) {
  check_finite<T>(values, op);
  Tensor<T> out(std::move(shape), std::move(values));
  auto& node = *out.node();
  node.op = op;
  if (any_requires_grad<T>(parents)) {
    node.requires_grad = true;
    for (const auto* p : parents) node.parents.push_back(p->defined() ? p->node() : nullptr);
    node.backward = std::move(rule);
  }
  return out;
}

template <typename T>
bool wants_grad(const std::shared_ptr<Node<T>>& p) {
  return p && p->requires_grad;
}

struct Dims4 {
  std::int64_t n, c, h, w;
};

Dims4 spatial_dims(const Shape& s, const char* op) {
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  throw DimensionError(std::string(op) + ": expected CHW or NCHW tensor, got " + to_string(s));
}

Shape like_input(const Shape& in, std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  if (in.size() == 3) return {c, h, w};
  return {n, c, h, w};
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                         to_string(b));
  }
}

// Accumulating matrix product with double partial sums: C += A (MxJ) * B (JxN).
void gemm_acc(int M, int N, int J, const float* A, int lda, const float* B, int ldb, double* C,
              int ldc) {
  kernels::active().gemm_acc(M, N, J, A, lda, B, ldb, C, ldc);
}

void gemm_acc(int M, int N, int J, const double* A, int lda, const double* B, int ldb, double* C,
              int ldc) {
  for (int m = 0; m < M; ++m) {
    double* c = C + static_cast<long>(m) * ldc;
    const double* a = A + static_cast<long>(m) * lda;
    for (int j = 0; j < J; ++j) {
      const double w = a[j];
      const double* b = B + static_cast<long>(j) * ldb;
      for (int n = 0; n < N; ++n) c[n] += w * b[n];
    }
  }
}

struct ConvGeom {
  std::int64_t n, cin, h, w, cout, k, stride, pad, ho, wo;
  std::int64_t K() const { return cin * k * k; }
  std::int64_t P() const { return ho * wo; }
};

// col[K][P]
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::int64_t P = g.P();
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((ci * g.k + ky) * g.k + kx) * P;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = x + (ci * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// row[P][K] (transpose of im2col), used for the weight gradient.
template <typename T>
void im2row(const T* x, const ConvGeom& g, T* rowbuf) {
  const std::int64_t K = g.K();
  for (std::int64_t oy = 0; oy < g.ho; ++oy) {
    for (std::int64_t ox = 0; ox < g.wo; ++ox) {
      T* dst = rowbuf + (oy * g.wo + ox) * K;
      for (std::int64_t ci = 0; ci < g.cin; ++ci) {
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          for (std::int64_t kx = 0; kx < g.k; ++kx) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            const bool inside = iy >= 0 && iy < g.h && ix >= 0 && ix < g.w;
            *dst++ = inside ? x[(ci * g.h + iy) * g.w + ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add col[K][P] back onto the input raster (double accumulator).
void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const std::int64_t P = g.P();
  for (std::int64_t ci = 0; ci < g.cin; ++ci) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((ci * g.k + ky) * g.k + kx) * P;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = dx + (ci * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += row[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T> transpose(const std::vector<T>& a, std::int64_t rows, std::int64_t cols) {
  std::vector<T> t(a.size());
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) t[c * rows + r] = a[r * cols + c];
  return t;
}

template <typename T, typename F, typename G>
Tensor<T> unary(const Tensor<T>& x, const char* op, F forward, G derivative) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xv[i]);
  record_flops(op, static_cast<std::int64_t>(out.size()));
  return make_result<T>(x.shape(), std::move(out), op, {&x}, [derivative](Node<T>& self) {
    auto& px = self.parents[0];
    auto& gx = px->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += self.grad[i] * derivative(px->value[i], self.value[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// convolution

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
  const auto d = spatial_dims(input.shape(), "conv2d");
  if (weight.rank() != 4) throw DimensionError("conv2d: weight must be [Cout,Cin,k,k], got " + to_string(weight.shape()));
  const std::int64_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != d.c) {
    throw DimensionError("conv2d: input has " + std::to_string(d.c) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
  }
  if (weight.dim(3) != k) throw DimensionError("conv2d: kernel must be square");
  if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(cout) + "]");
  }
  const std::int64_t span_h = d.h + 2 * padding - k, span_w = d.w + 2 * padding - k;
  // Strided windows follow the usual floor convention; trailing rows that no
  // window reaches are dropped. A window that never fits is a configuration error.
  if (span_h < 0 || span_w < 0) {
    throw ConfigError("conv2d: output size is not a positive integer for input " +
                      to_string(input.shape()) + ", k=" + std::to_string(k) +
                      ", stride=" + std::to_string(stride) + ", padding=" + std::to_string(padding));
  }
  const ConvGeom g{d.n, d.c, d.h, d.w, cout, k, stride, padding, span_h / stride + 1,
                   span_w / stride + 1};
  const std::int64_t K = g.K(), P = g.P();

  const T* xv = input.values().data();
  const T* wv = weight.values().data();
  std::vector<T> out(static_cast<std::size_t>(g.n * cout * P));
  std::vector<T> col(static_cast<std::size_t>(K * P));
  std::vector<double> acc(static_cast<std::size_t>(cout * P));
  for (std::int64_t n = 0; n < g.n; ++n) {
    im2col(xv + n * g.cin * g.h * g.w, g, col.data());
    for (std::int64_t co = 0; co < cout; ++co) {
      const double b = bias.defined() ? static_cast<double>(bias.values()[co]) : 0.0;
      std::fill(acc.begin() + co * P, acc.begin() + (co + 1) * P, b);
    }
    gemm_acc(static_cast<int>(cout), static_cast<int>(P), static_cast<int>(K), wv,
             static_cast<int>(K), col.data(), static_cast<int>(P), acc.data(), static_cast<int>(P));
    T* o = out.data() + n * cout * P;
    for (std::int64_t i = 0; i < cout * P; ++i) o[i] = static_cast<T>(acc[i]);
  }
  record_flops("conv2d", 2 * k * k * g.cin * cout * P * g.n);

  return make_result<T>(
      like_input(input.shape(), g.n, cout, g.ho, g.wo), std::move(out), "conv2d",
      {&input, &weight, &bias}, [g](Node<T>& self) {
        const std::int64_t K = g.K(), P = g.P();
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        const T* gy = self.grad.data();
        if (wants_grad(pb)) {
          auto& gb = pb->grad_buffer();
          for (std::int64_t co = 0; co < g.cout; ++co) {
            double s = 0.0;
            for (std::int64_t n = 0; n < g.n; ++n) {
              const T* r = gy + (n * g.cout + co) * P;
              for (std::int64_t p = 0; p < P; ++p) s += r[p];
            }
            gb[co] += static_cast<T>(s);
          }
        }
        if (wants_grad(pw)) {
          std::vector<T> rows(static_cast<std::size_t>(P * K));
          std::vector<double> acc(static_cast<std::size_t>(g.cout * K), 0.0);
          for (std::int64_t n = 0; n < g.n; ++n) {
            im2row(px->value.data() + n * g.cin * g.h * g.w, g, rows.data());
            gemm_acc(static_cast<int>(g.cout), static_cast<int>(K), static_cast<int>(P),
                     gy + n * g.cout * P, static_cast<int>(P), rows.data(), static_cast<int>(K),
                     acc.data(), static_cast<int>(K));
          }
          auto& gw = pw->grad_buffer();
          for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += static_cast<T>(acc[i]);
        }
        if (wants_grad(px)) {
          const std::vector<T> wt = transpose(pw->value, g.cout, K);  // [K][Cout]
          std::vector<double> dcol(static_cast<std::size_t>(K * P));
          std::vector<double> dx(static_cast<std::size_t>(g.cin * g.h * g.w));
          auto& gx = px->grad_buffer();
          for (std::int64_t n = 0; n < g.n; ++n) {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            std::fill(dx.begin(), dx.end(), 0.0);
            gemm_acc(static_cast<int>(K), static_cast<int>(P), static_cast<int>(g.cout), wt.data(),
                     static_cast<int>(g.cout), gy + n * g.cout * P, static_cast<int>(P),
                     dcol.data(), static_cast<int>(P));
            col2im_add(dcol.data(), g, dx.data());
            T* dst = gx.data() + n * g.cin * g.h * g.w;
            for (std::size_t i = 0; i < dx.size(); ++i) dst[i] += static_cast<T>(dx[i]);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  if (branch_monitor_active()) {
    for (T v : x.values()) record_branch(v > T(0) ? 1 : 2);
  }
  return unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid",
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T out) { return out * (T(1) - out); });
}

// ---------------------------------------------------------------------------
// pooling / upsampling

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& x) {
  const auto d = spatial_dims(x.shape(), "maxpool2x2");
  if (d.h % 2 != 0 || d.w % 2 != 0) {
    throw DimensionError("maxpool2x2: spatial dims must be even, got " + to_string(x.shape()));
  }
  const std::int64_t ho = d.h / 2, wo = d.w / 2;
  const auto& xv = x.values();
  std::vector<T> out(static_cast<std::size_t>(d.n * d.c * ho * wo));
  std::vector<std::int64_t> argmax(out.size());
  for (std::int64_t plane = 0; plane < d.n * d.c; ++plane) {
    const std::int64_t base = plane * d.h * d.w;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        std::int64_t best = base + (2 * oy) * d.w + 2 * ox;
        for (std::int64_t dy = 0; dy < 2; ++dy) {
          for (std::int64_t dx = 0; dx < 2; ++dx) {
            const std::int64_t idx = base + (2 * oy + dy) * d.w + 2 * ox + dx;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::int64_t o = (plane * ho + oy) * wo + ox;
        out[o] = xv[best];
        argmax[o] = best;
      }
    }
  }
  if (branch_monitor_active()) {
    for (auto a : argmax) record_branch(static_cast<std::uint64_t>(a) + 3);
  }
  record_flops("maxpool2x2", static_cast<std::int64_t>(out.size()));
  return make_result<T>(like_input(x.shape(), d.n, d.c, ho, wo), std::move(out), "maxpool2x2", {&x},
                        [argmax = std::move(argmax)](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += self.grad[o];
                        });
}

namespace {
struct Tap {
  std::int64_t i0, i1;
  double w0, w1;
};

// Half-pixel source coordinate, clamped at the low edge.
std::vector<Tap> upsample_taps(std::int64_t in, std::int64_t out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  for (std::int64_t o = 0; o < out; ++o) {
    const double src = std::max((static_cast<double>(o) + 0.5) / 2.0 - 0.5, 0.0);
    const auto i0 = static_cast<std::int64_t>(std::floor(src));
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    const double l1 = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - l1, l1};
  }
  return taps;
}
}  // namespace

template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& x) {
  const auto d = spatial_dims(x.shape(), "upsample_bilinear2x");
  const std::int64_t ho = 2 * d.h, wo = 2 * d.w;
  const auto ty = upsample_taps(d.h, ho), tx = upsample_taps(d.w, wo);
  const auto& xv = x.values();
  std::vector<T> out(static_cast<std::size_t>(d.n * d.c * ho * wo));
  for (std::int64_t plane = 0; plane < d.n * d.c; ++plane) {
    const T* src = xv.data() + plane * d.h * d.w;
    T* dst = out.data() + plane * ho * wo;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      const Tap& a = ty[oy];
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        const Tap& b = tx[ox];
        const double v = a.w0 * (b.w0 * src[a.i0 * d.w + b.i0] + b.w1 * src[a.i0 * d.w + b.i1]) +
                         a.w1 * (b.w0 * src[a.i1 * d.w + b.i0] + b.w1 * src[a.i1 * d.w + b.i1]);
        dst[oy * wo + ox] = static_cast<T>(v);
      }
    }
  }
  record_flops("upsample_bilinear2x", 8 * static_cast<std::int64_t>(out.size()));
  return make_result<T>(
      like_input(x.shape(), d.n, d.c, ho, wo), std::move(out), "upsample_bilinear2x", {&x},
      [d, ho, wo, ty, tx](Node<T>& self) {
        auto& gx = self.parents[0]->grad_buffer();
        std::vector<double> acc(static_cast<std::size_t>(d.h * d.w));
        for (std::int64_t plane = 0; plane < d.n * d.c; ++plane) {
          std::fill(acc.begin(), acc.end(), 0.0);
          const T* gy = self.grad.data() + plane * ho * wo;
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            const Tap& a = ty[oy];
            for (std::int64_t ox = 0; ox < wo; ++ox) {
              const Tap& b = tx[ox];
              const double g = gy[oy * wo + ox];
              acc[a.i0 * d.w + b.i0] += a.w0 * b.w0 * g;
              acc[a.i0 * d.w + b.i1] += a.w0 * b.w1 * g;
              acc[a.i1 * d.w + b.i0] += a.w1 * b.w0 * g;
              acc[a.i1 * d.w + b.i1] += a.w1 * b.w1 * g;
            }
          }
          T* dst = gx.data() + plane * d.h * d.w;
          for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += static_cast<T>(acc[i]);
        }
      });
}

// ---------------------------------------------------------------------------
// batch normalization

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     RunningStats<T>& stats, bool training, BatchNormOptions opt) {
  const auto d = spatial_dims(x.shape(), "batch_norm");
  const auto C = static_cast<std::size_t>(d.c);
  if (gamma.numel() != d.c || beta.numel() != d.c || stats.mean.size() != C || stats.var.size() != C) {
    throw DimensionError("batch_norm: parameter size does not match " + std::to_string(d.c) + " channels");
  }
  const std::int64_t hw = d.h * d.w;
  const std::int64_t count = d.n * hw;
  const auto& xv = x.values();
  std::vector<double> mu(C), inv_std(C);
  if (training) {
    if (count < 2) throw DimensionError("batch_norm: training mode needs more than one value per channel");
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* p = xv.data() + (n * d.c + static_cast<std::int64_t>(c)) * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::int64_t n = 0; n < d.n; ++n) {
        const T* p = xv.data() + (n * d.c + static_cast<std::int64_t>(c)) * hw;
        for (std::int64_t i = 0; i < hw; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      const double var = ss / static_cast<double>(count);
      mu[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + opt.eps);
      const double unbiased = ss / static_cast<double>(count - 1);
      stats.mean[c] = static_cast<T>((1.0 - opt.momentum) * stats.mean[c] + opt.momentum * m);
      stats.var[c] = static_cast<T>((1.0 - opt.momentum) * stats.var[c] + opt.momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(static_cast<double>(stats.var[c]) + opt.eps);
    }
  }
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> out(xv.size());
  for (std::int64_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::int64_t off = (n * d.c + static_cast<std::int64_t>(c)) * hw;
      const double scale = gv[c] * inv_std[c];
      const double shift = bv[c] - mu[c] * scale;
      for (std::int64_t i = 0; i < hw; ++i) out[off + i] = static_cast<T>(xv[off + i] * scale + shift);
    }
  }
  record_flops("batch_norm", static_cast<std::int64_t>(out.size()));
  return make_result<T>(
      x.shape(), std::move(out), "batch_norm", {&x, &gamma, &beta},
      [d, hw, count, mu, inv_std, training](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const auto C = static_cast<std::size_t>(d.c);
        const T* gy = self.grad.data();
        for (std::size_t c = 0; c < C; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::int64_t n = 0; n < d.n; ++n) {
            const std::int64_t off = (n * d.c + static_cast<std::int64_t>(c)) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              const double xhat = (px->value[off + i] - mu[c]) * inv_std[c];
              sum_g += gy[off + i];
              sum_gx += gy[off + i] * xhat;
            }
          }
          if (wants_grad(pg)) pg->grad_buffer()[c] += static_cast<T>(sum_gx);
          if (wants_grad(pb)) pb->grad_buffer()[c] += static_cast<T>(sum_g);
          if (!wants_grad(px)) continue;
          auto& gx = px->grad_buffer();
          const double scale = pg->value[c] * inv_std[c];
          const double mean_g = sum_g / static_cast<double>(count);
          const double mean_gx = sum_gx / static_cast<double>(count);
          for (std::int64_t n = 0; n < d.n; ++n) {
            const std::int64_t off = (n * d.c + static_cast<std::int64_t>(c)) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              if (training) {
                const double xhat = (px->value[off + i] - mu[c]) * inv_std[c];
                gx[off + i] += static_cast<T>(scale * (gy[off + i] - mean_g - xhat * mean_gx));
              } else {
                gx[off + i] += static_cast<T>(scale * gy[off + i]);
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// dropout

template <typename T>
Tensor<T> dropout_with_mask(const Tensor<T>& x, double p, const std::vector<std::uint8_t>& keep) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (keep.size() != static_cast<std::size_t>(x.numel())) throw DimensionError("dropout: mask size mismatch");
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep[i] ? xv[i] * scale : T(0);
  record_flops("dropout", static_cast<std::int64_t>(out.size()));
  return make_result<T>(x.shape(), std::move(out), "dropout", {&x}, [keep, scale](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (keep[i]) gx[i] += self.grad[i] * scale;
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Pcg32* rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  if (!rng) throw UsageError("dropout: training mode requires an rng");
  std::vector<std::uint8_t> keep(static_cast<std::size_t>(x.numel()));
  for (auto& k : keep) k = rng->uniform() >= p ? 1 : 0;
  return dropout_with_mask(x, p, keep);
}

// ---------------------------------------------------------------------------
// structural ops

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const auto da = spatial_dims(a.shape(), "concat_channels");
  const auto db = spatial_dims(b.shape(), "concat_channels");
  if (a.rank() != b.rank() || da.n != db.n || da.h != db.h || da.w != db.w) {
    throw DimensionError("concat_channels: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::int64_t hw = da.h * da.w, ca = da.c * hw, cb = db.c * hw;
  std::vector<T> out(static_cast<std::size_t>(da.n * (ca + cb)));
  for (std::int64_t n = 0; n < da.n; ++n) {
    std::copy_n(a.values().data() + n * ca, ca, out.data() + n * (ca + cb));
    std::copy_n(b.values().data() + n * cb, cb, out.data() + n * (ca + cb) + ca);
  }
  return make_result<T>(like_input(a.shape(), da.n, da.c + db.c, da.h, da.w), std::move(out),
                        "concat_channels", {&a, &b}, [n_ = da.n, ca, cb](Node<T>& self) {
                          auto& pa = self.parents[0];
                          auto& pb = self.parents[1];
                          for (std::int64_t n = 0; n < n_; ++n) {
                            const T* g = self.grad.data() + n * (ca + cb);
                            if (wants_grad(pa)) {
                              T* dst = pa->grad_buffer().data() + n * ca;
                              for (std::int64_t i = 0; i < ca; ++i) dst[i] += g[i];
                            }
                            if (wants_grad(pb)) {
                              T* dst = pb->grad_buffer().data() + n * cb;
                              for (std::int64_t i = 0; i < cb; ++i) dst[i] += g[ca + i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end) {
  const auto d = spatial_dims(x.shape(), "slice_channels");
  if (begin < 0 || end > d.c || begin >= end) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + std::to_string(d.c) + " channels");
  }
  const std::int64_t hw = d.h * d.w, c = end - begin;
  std::vector<T> out(static_cast<std::size_t>(d.n * c * hw));
  for (std::int64_t n = 0; n < d.n; ++n)
    std::copy_n(x.values().data() + (n * d.c + begin) * hw, c * hw, out.data() + n * c * hw);
  return make_result<T>(like_input(x.shape(), d.n, c, d.h, d.w), std::move(out), "slice_channels", {&x},
                        [d, hw, c, begin](Node<T>& self) {
                          auto& gx = self.parents[0]->grad_buffer();
                          for (std::int64_t n = 0; n < d.n; ++n) {
                            T* dst = gx.data() + (n * d.c + begin) * hw;
                            const T* g = self.grad.data() + n * c * hw;
                            for (std::int64_t i = 0; i < c * hw; ++i) dst[i] += g[i];
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {&x}, [](Node<T>& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  record_flops("add", static_cast<std::int64_t>(out.size()));
  return make_result<T>(a.shape(), std::move(out), "add", {&a, &b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!wants_grad(p)) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  record_flops("sub", static_cast<std::int64_t>(out.size()));
  return make_result<T>(a.shape(), std::move(out), "sub", {&a, &b}, [](Node<T>& self) {
    if (wants_grad(self.parents[0])) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self.parents[1])) {
      auto& g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  record_flops("mul", static_cast<std::int64_t>(out.size()));
  return make_result<T>(a.shape(), std::move(out), "mul", {&a, &b}, [](Node<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (wants_grad(pb)) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <typename T>
Tensor<T> mul_channel_broadcast(const Tensor<T>& x, const Tensor<T>& gate) {
  const auto dx = spatial_dims(x.shape(), "mul_channel_broadcast");
  const auto dg = spatial_dims(gate.shape(), "mul_channel_broadcast");
  if (x.rank() != gate.rank() || dg.c != 1 || dg.n != dx.n || dg.h != dx.h || dg.w != dx.w) {
    throw DimensionError("mul_channel_broadcast: gate " + to_string(gate.shape()) +
                         " cannot broadcast over " + to_string(x.shape()));
  }
  const std::int64_t hw = dx.h * dx.w;
  std::vector<T> out(x.values().size());
  for (std::int64_t n = 0; n < dx.n; ++n)
    for (std::int64_t c = 0; c < dx.c; ++c)
      for (std::int64_t i = 0; i < hw; ++i)
        out[(n * dx.c + c) * hw + i] = x.values()[(n * dx.c + c) * hw + i] * gate.values()[n * hw + i];
  record_flops("mul_channel_broadcast", static_cast<std::int64_t>(out.size()));
  return make_result<T>(x.shape(), std::move(out), "mul_channel_broadcast", {&x, &gate},
                        [dx, hw](Node<T>& self) {
                          auto& px = self.parents[0];
                          auto& pg = self.parents[1];
                          if (wants_grad(px)) {
                            auto& g = px->grad_buffer();
                            for (std::int64_t n = 0; n < dx.n; ++n)
                              for (std::int64_t c = 0; c < dx.c; ++c)
                                for (std::int64_t i = 0; i < hw; ++i)
                                  g[(n * dx.c + c) * hw + i] +=
                                      self.grad[(n * dx.c + c) * hw + i] * pg->value[n * hw + i];
                          }
                          if (wants_grad(pg)) {
                            auto& g = pg->grad_buffer();
                            for (std::int64_t n = 0; n < dx.n; ++n) {
                              for (std::int64_t i = 0; i < hw; ++i) {
                                double s = 0.0;
                                for (std::int64_t c = 0; c < dx.c; ++c)
                                  s += static_cast<double>(self.grad[(n * dx.c + c) * hw + i]) *
                                       px->value[(n * dx.c + c) * hw + i];
                                g[n * hw + i] += static_cast<T>(s);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return unary(x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return unary(x, "mul_scalar", [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> rsub_scalar(T c, const Tensor<T>& x) {
  return unary(x, "rsub_scalar", [c](T v) { return c - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.values()) s += v;
  record_flops("sum", x.numel());
  return make_result<T>(Shape{}, {static_cast<T>(s)}, "sum", {&x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  double s = 0.0;
  for (T v : x.values()) s += v;
  const double n = static_cast<double>(x.numel());
  record_flops("mean", x.numel());
  return make_result<T>(Shape{}, {static_cast<T>(s / n)}, "mean", {&x}, [n](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const T share = static_cast<T>(self.grad[0] / n);
    for (auto& v : g) v += share;
  });
}

#define FIRESENSE_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);      \
  template Tensor<T> relu(const Tensor<T>&);                                                       \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                    \
  template Tensor<T> maxpool2x2(const Tensor<T>&);                                                 \
  template Tensor<T> upsample_bilinear2x(const Tensor<T>&);                                        \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                RunningStats<T>&, bool, BatchNormOptions);                         \
  template Tensor<T> dropout(const Tensor<T>&, double, Pcg32*, bool);                              \
  template Tensor<T> dropout_with_mask(const Tensor<T>&, double, const std::vector<std::uint8_t>&); \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> slice_channels(const Tensor<T>&, std::int64_t, std::int64_t);                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul_channel_broadcast(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                              \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                              \
  template Tensor<T> rsub_scalar(T, const Tensor<T>&);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&);

FIRESENSE_INSTANTIATE_OPS(float)
FIRESENSE_INSTANTIATE_OPS(double)

}  // namespace firesense
