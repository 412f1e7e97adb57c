#include "listap/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace listap::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt(const double* a, std::size_t a_rows, const double* b, std::size_t b_rows,
             std::size_t k_dim, double* out, std::size_t ldo) {
  for (std::size_t i = 0; i < a_rows; ++i) {
    for (std::size_t j = 0; j < b_rows; ++j) {
      out[i * ldo + j] = dot(a + i * k_dim, b + j * k_dim, k_dim);
    }
  }
}

}  // namespace scalar

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", &scalar::dot, &scalar::axpy, &scalar::gemm_nt};
  return table;
}

const KernelTable* avx2_table() {
  static const KernelTable* table = []() -> const KernelTable* {
#if defined(__x86_64__) || defined(_M_X64)
    if (!avx2::compiled()) return nullptr;
    __builtin_cpu_init();
    if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
    static const KernelTable t{"avx2", &avx2::dot, &avx2::axpy, &avx2::gemm_nt};
    return &t;
#else
    return nullptr;
#endif
  }();
  return table;
}

const KernelTable& active() {
  static const KernelTable& table = []() -> const KernelTable& {
    const char* env = std::getenv("LISTWISE_AP_SIMD");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return scalar_table();
    if (const KernelTable* t = avx2_table()) return *t;
    return scalar_table();
  }();
  return table;
}

}  // namespace listap::kernels
