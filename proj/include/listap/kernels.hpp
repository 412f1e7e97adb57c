#pragma once

// Dense double-precision inner loops used by the similarity, loss-gradient and
// embedder code. Each kernel has a scalar reference implementation and, on
// x86-64, an AVX2/FMA variant. The active table is chosen once at startup:
// AVX2 when the CPU supports it, unless LISTWISE_AP_SIMD=scalar is set.

#include <cstddef>
#include <span>
#include <string_view>

namespace listap::kernels {

struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i*ldo + j] = sum_k a[i*k_dim + k] * b[j*k_dim + k]   (A · Bᵀ, row-major)
  void (*gemm_nt)(const double* a, std::size_t a_rows, const double* b, std::size_t b_rows,
                  std::size_t k_dim, double* out, std::size_t ldo);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nt(const double* a, std::size_t a_rows, const double* b, std::size_t b_rows,
             std::size_t k_dim, double* out, std::size_t ldo);
}  // namespace scalar

namespace avx2 {
bool compiled();
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nt(const double* a, std::size_t a_rows, const double* b, std::size_t b_rows,
             std::size_t k_dim, double* out, std::size_t ldo);
}  // namespace avx2

const KernelTable& scalar_table();
// nullptr when AVX2 is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace listap::kernels
