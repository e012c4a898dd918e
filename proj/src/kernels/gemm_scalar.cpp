#include "firesense/kernels.hpp"

namespace firesense::kernels {

void gemm_acc_scalar(int M, int N, int J, const float* A, int lda, const float* B, int ldb,
                     double* C, int ldc) {
  for (int m = 0; m < M; ++m) {
    double* c = C + static_cast<long>(m) * ldc;
    const float* a = A + static_cast<long>(m) * lda;
    for (int j = 0; j < J; ++j) {
      const double w = a[j];
      const float* b = B + static_cast<long>(j) * ldb;
      for (int n = 0; n < N; ++n) c[n] += w * static_cast<double>(b[n]);
    }
  }
}

}  // namespace firesense::kernels
