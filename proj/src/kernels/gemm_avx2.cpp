#include <immintrin.h>

#include "firesense/kernels.hpp"

namespace firesense::kernels {

namespace {

inline __m256d load4(const float* p) { return _mm256_cvtps_pd(_mm_loadu_ps(p)); }

// Four rows of C, eight columns, accumulators held in registers across the j loop.
inline void block_4x8(int J, const float* A, int lda, const float* B, int ldb, double* C,
                      int ldc) {
  double* c0 = C;
  double* c1 = C + ldc;
  double* c2 = C + 2 * static_cast<long>(ldc);
  double* c3 = C + 3 * static_cast<long>(ldc);
  __m256d a00 = _mm256_loadu_pd(c0), a01 = _mm256_loadu_pd(c0 + 4);
  __m256d a10 = _mm256_loadu_pd(c1), a11 = _mm256_loadu_pd(c1 + 4);
  __m256d a20 = _mm256_loadu_pd(c2), a21 = _mm256_loadu_pd(c2 + 4);
  __m256d a30 = _mm256_loadu_pd(c3), a31 = _mm256_loadu_pd(c3 + 4);
  const float* r0 = A;
  const float* r1 = A + lda;
  const float* r2 = A + 2 * static_cast<long>(lda);
  const float* r3 = A + 3 * static_cast<long>(lda);
  for (int j = 0; j < J; ++j) {
    const float* b = B + static_cast<long>(j) * ldb;
    const __m256d b0 = load4(b);
    const __m256d b1 = load4(b + 4);
    __m256d w = _mm256_set1_pd(r0[j]);
    a00 = _mm256_fmadd_pd(w, b0, a00);
    a01 = _mm256_fmadd_pd(w, b1, a01);
    w = _mm256_set1_pd(r1[j]);
    a10 = _mm256_fmadd_pd(w, b0, a10);
    a11 = _mm256_fmadd_pd(w, b1, a11);
    w = _mm256_set1_pd(r2[j]);
    a20 = _mm256_fmadd_pd(w, b0, a20);
    a21 = _mm256_fmadd_pd(w, b1, a21);
    w = _mm256_set1_pd(r3[j]);
    a30 = _mm256_fmadd_pd(w, b0, a30);
    a31 = _mm256_fmadd_pd(w, b1, a31);
  }
  _mm256_storeu_pd(c0, a00);
  _mm256_storeu_pd(c0 + 4, a01);
  _mm256_storeu_pd(c1, a10);
  _mm256_storeu_pd(c1 + 4, a11);
  _mm256_storeu_pd(c2, a20);
  _mm256_storeu_pd(c2 + 4, a21);
  _mm256_storeu_pd(c3, a30);
  _mm256_storeu_pd(c3 + 4, a31);
}

// One row of C, sixteen columns.
inline void block_1x16(int J, const float* a, const float* B, int ldb, double* c) {
  __m256d x0 = _mm256_loadu_pd(c), x1 = _mm256_loadu_pd(c + 4);
  __m256d x2 = _mm256_loadu_pd(c + 8), x3 = _mm256_loadu_pd(c + 12);
  for (int j = 0; j < J; ++j) {
    const float* b = B + static_cast<long>(j) * ldb;
    const __m256d w = _mm256_set1_pd(a[j]);
    x0 = _mm256_fmadd_pd(w, load4(b), x0);
    x1 = _mm256_fmadd_pd(w, load4(b + 4), x1);
    x2 = _mm256_fmadd_pd(w, load4(b + 8), x2);
    x3 = _mm256_fmadd_pd(w, load4(b + 12), x3);
  }
  _mm256_storeu_pd(c, x0);
  _mm256_storeu_pd(c + 4, x1);
  _mm256_storeu_pd(c + 8, x2);
  _mm256_storeu_pd(c + 12, x3);
}

// Scalar tail; _mm_fma is not needed because float*float is exact in double.
inline void tail(int m0, int m1, int n0, int n1, int J, const float* A, int lda, const float* B,
                 int ldb, double* C, int ldc) {
  for (int m = m0; m < m1; ++m) {
    const float* a = A + static_cast<long>(m) * lda;
    double* c = C + static_cast<long>(m) * ldc;
    for (int j = 0; j < J; ++j) {
      const double w = a[j];
      const float* b = B + static_cast<long>(j) * ldb;
      for (int n = n0; n < n1; ++n) c[n] += w * static_cast<double>(b[n]);
    }
  }
}

}  // namespace

void gemm_acc_avx2(int M, int N, int J, const float* A, int lda, const float* B, int ldb,
                   double* C, int ldc) {
  // Column panels keep a K x 128 slab of B hot while all row blocks sweep it.
  constexpr int kPanel = 128;
  const int n8 = N - N % 8;
  const int m4 = M - M % 4;
  for (int n0 = 0; n0 < n8; n0 += kPanel) {
    const int n1 = n0 + kPanel < n8 ? n0 + kPanel : n8;
    for (int m = 0; m < m4; m += 4) {
      const float* a = A + static_cast<long>(m) * lda;
      double* c = C + static_cast<long>(m) * ldc;
      for (int n = n0; n < n1; n += 8) block_4x8(J, a, lda, B + n, ldb, c + n, ldc);
    }
  }
  int m = m4;
  const int n16 = N - N % 16;
  for (; m < M; ++m) {
    const float* a = A + static_cast<long>(m) * lda;
    double* c = C + static_cast<long>(m) * ldc;
    for (int n = 0; n < n16; n += 16) block_1x16(J, a, B + n, ldb, c + n);
    if (n16 < N) tail(m, m + 1, n16, N, J, A, lda, B, ldb, C, ldc);
  }
  if (n8 < N && m4 > 0) tail(0, m4, n8, N, J, A, lda, B, ldb, C, ldc);
}

}  // namespace firesense::kernels
