#include "jbss/kernels.hpp"

namespace jbss::kernels::scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += x[i] * y[i];
  }
  return sum;
}

double weighted_dot(const double* w, const double* x, const double* y, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += w[i] * x[i] * y[i];
  }
  return sum;
}

void quadratic_forms(std::span<const double* const> rows, std::size_t n, const double* p, double* u) {
  const std::size_t k = rows.size();
  for (std::size_t v = 0; v < n; ++v) {
    double acc = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      const double ya = rows[a][v];
      double t = p[a * k + a] * ya;
      for (std::size_t b = a + 1; b < k; ++b) {
        t += 2.0 * p[a * k + b] * rows[b][v];
      }
      acc += ya * t;
    }
    u[v] = acc;
  }
}

}  // namespace jbss::kernels::scalar
