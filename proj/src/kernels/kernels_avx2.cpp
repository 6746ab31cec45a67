#include "jbss/kernels.hpp"

#include <immintrin.h>

namespace jbss::kernels::avx2 {

namespace {

double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    sum += x[i] * y[i];
  }
  return sum;
}

double weighted_dot(const double* w, const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d a0 = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(x + i));
    const __m256d a1 = _mm256_mul_pd(_mm256_loadu_pd(w + i + 4), _mm256_loadu_pd(x + i + 4));
    acc0 = _mm256_fmadd_pd(a0, _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(a1, _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d a0 = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(x + i));
    acc0 = _mm256_fmadd_pd(a0, _mm256_loadu_pd(y + i), acc0);
  }
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    sum += w[i] * x[i] * y[i];
  }
  return sum;
}

void quadratic_forms(std::span<const double* const> rows, std::size_t n, const double* p, double* u) {
  const std::size_t k = rows.size();
  std::size_t v = 0;
  for (; v + 4 <= n; v += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t a = 0; a < k; ++a) {
      const __m256d ya = _mm256_loadu_pd(rows[a] + v);
      __m256d t = _mm256_mul_pd(_mm256_set1_pd(p[a * k + a]), ya);
      for (std::size_t b = a + 1; b < k; ++b) {
        t = _mm256_fmadd_pd(_mm256_set1_pd(2.0 * p[a * k + b]), _mm256_loadu_pd(rows[b] + v), t);
      }
      acc = _mm256_fmadd_pd(ya, t, acc);
    }
    _mm256_storeu_pd(u + v, acc);
  }
  if (v < n) {
    // Tail through the scalar reference on offset row pointers; the
    // dispatcher guarantees k <= 64.
    const double* tail[64];
    for (std::size_t a = 0; a < k; ++a) {
      tail[a] = rows[a] + v;
    }
    scalar::quadratic_forms(std::span<const double* const>(tail, k), n - v, p, u + v);
  }
}

}  // namespace jbss::kernels::avx2
