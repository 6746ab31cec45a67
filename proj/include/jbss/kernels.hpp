#pragma once

// Per-sample inner loops over the V axis. Every kernel has a scalar reference
// implementation and, on x86-64 builds, an AVX2/FMA variant chosen at runtime
// when the CPU supports it. Results agree to rounding (the vector variants sum
// in a different order and fuse multiply-adds).
//
// Set JBSS_FORCE_SCALAR=1 in the environment, or call set_backend(), to pin the
// scalar path.

#include <cstddef>
#include <span>
#include <string_view>

namespace jbss::kernels {

enum class Backend { Scalar, Avx2 };

bool avx2_available();
Backend active_backend();
/// Throws jbss::Error when asking for a backend this build or CPU lacks.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

/// sum_i x[i] * y[i]
double dot(const double* x, const double* y, std::size_t n);
/// sum_i w[i] * x[i] * y[i]
double weighted_dot(const double* w, const double* x, const double* y, std::size_t n);
/// u[v] = sum_{a,b} p(a,b) rows[a][v] rows[b][v] for v < n, with p a symmetric
/// K x K row-major matrix and rows.size() == K.
void quadratic_forms(std::span<const double* const> rows, std::size_t n, const double* p, double* u);

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
double weighted_dot(const double* w, const double* x, const double* y, std::size_t n);
void quadratic_forms(std::span<const double* const> rows, std::size_t n, const double* p, double* u);
}  // namespace scalar

namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
double weighted_dot(const double* w, const double* x, const double* y, std::size_t n);
void quadratic_forms(std::span<const double* const> rows, std::size_t n, const double* p, double* u);
}  // namespace avx2

}  // namespace jbss::kernels
