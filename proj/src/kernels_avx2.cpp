#include "listap/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

namespace listap::kernels::avx2 {

#if defined(__AVX2__) && defined(__FMA__)

bool compiled() { return true; }

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt(const double* a, std::size_t a_rows, const double* b, std::size_t b_rows,
             std::size_t k_dim, double* out, std::size_t ldo) {
  for (std::size_t i = 0; i < a_rows; ++i) {
    const double* ai = a + i * k_dim;
    for (std::size_t j = 0; j < b_rows; ++j) out[i * ldo + j] = dot(ai, b + j * k_dim, k_dim);
  }
}

#else

bool compiled() { return false; }

double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }

void gemm_nt(const double* a, std::size_t a_rows, const double* b, std::size_t b_rows,
             std::size_t k_dim, double* out, std::size_t ldo) {
  scalar::gemm_nt(a, a_rows, b, b_rows, k_dim, out, ldo);
}

#endif

}  // namespace listap::kernels::avx2
