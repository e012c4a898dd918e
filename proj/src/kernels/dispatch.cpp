#include <cstdlib>
#include <string>

#include "firesense/error.hpp"
#include "firesense/kernels.hpp"

namespace firesense::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(FIRESENSE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

constexpr KernelTable kScalar{Backend::Scalar, &gemm_acc_scalar};
#if defined(FIRESENSE_HAVE_AVX2)
constexpr KernelTable kAvx2{Backend::Avx2, &gemm_acc_avx2};
#endif

const KernelTable*& current() {
  static const KernelTable* t = &table(detect());
  return t;
}

}  // namespace

bool supported(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
      return cpu_has_avx2_fma();
  }
  return false;
}

Backend detect() {
  if (const char* env = std::getenv("FIRESENSE_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return Backend::Scalar;
    if (v == "avx2" && supported(Backend::Avx2)) return Backend::Avx2;
  }
  return supported(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

const KernelTable& table(Backend b) {
  if (!supported(b)) throw ConfigError("kernel backend '" + std::string(name(b)) + "' is not available");
#if defined(FIRESENSE_HAVE_AVX2)
  if (b == Backend::Avx2) return kAvx2;
#endif
  return kScalar;
}

const KernelTable& active() { return *current(); }

void select(Backend b) { current() = &table(b); }

std::string_view name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace firesense::kernels
