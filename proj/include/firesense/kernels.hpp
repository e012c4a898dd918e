#pragma once

#include <string_view>

namespace firesense::kernels {

enum class Backend { Scalar, Avx2 };

/// C[m][n] += sum_j A[m][j] * B[j][n], all strides in elements.
///
/// Products are formed in double and accumulated in double with j strictly
/// ascending for every (m, n). A float*float product is exact in double, so
/// every backend produces bitwise-identical results.
using GemmAccFn = void (*)(int M, int N, int J, const float* A, int lda, const float* B, int ldb,
                           double* C, int ldc);

struct KernelTable {
  Backend backend;
  GemmAccFn gemm_acc;
};

void gemm_acc_scalar(int M, int N, int J, const float* A, int lda, const float* B, int ldb,
                     double* C, int ldc);
#if defined(FIRESENSE_HAVE_AVX2)
void gemm_acc_avx2(int M, int N, int J, const float* A, int lda, const float* B, int ldb,
                   double* C, int ldc);
#endif

/// True when the backend was compiled in and the running CPU supports it.
bool supported(Backend b);

/// Best supported backend, unless FIRESENSE_KERNELS=scalar|avx2 overrides it.
Backend detect();

const KernelTable& table(Backend b);

/// Currently selected table (initialized from detect() on first use).
const KernelTable& active();

/// Throws ConfigError when `b` is not supported.
void select(Backend b);

std::string_view name(Backend b);

}  // namespace firesense::kernels
