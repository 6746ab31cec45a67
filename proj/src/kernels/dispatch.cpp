#include "jbss/core.hpp"
#include "jbss/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace jbss::kernels {

namespace {

constexpr std::size_t kMaxQuadraticRows = 64;

bool cpu_has_avx2() {
#if defined(JBSS_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  const char* force = std::getenv("JBSS_FORCE_SCALAR");
  if (force != nullptr && std::string(force) != "0" && std::string(force) != "") {
    return Backend::Scalar;
  }
  return cpu_has_avx2() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& backend_slot() {
  static std::atomic<Backend> slot{initial_backend()};
  return slot;
}

}  // namespace

bool avx2_available() {
  static const bool available = cpu_has_avx2();
  return available;
}

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (backend == Backend::Avx2 && !avx2_available()) {
    throw Error("AVX2 kernels are not available on this build or CPU");
  }
  backend_slot().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

#if defined(JBSS_HAVE_AVX2_TU)
#define JBSS_DISPATCH(fn, ...)                  \
  (active_backend() == Backend::Avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__))
#else
#define JBSS_DISPATCH(fn, ...) scalar::fn(__VA_ARGS__)
#endif

double dot(const double* x, const double* y, std::size_t n) { return JBSS_DISPATCH(dot, x, y, n); }

double weighted_dot(const double* w, const double* x, const double* y, std::size_t n) {
  return JBSS_DISPATCH(weighted_dot, w, x, y, n);
}

void quadratic_forms(std::span<const double* const> rows, std::size_t n, const double* p, double* u) {
  if (rows.size() > kMaxQuadraticRows) {
    throw Error("quadratic_forms supports at most 64 rows");
  }
  JBSS_DISPATCH(quadratic_forms, rows, n, p, u);
}

#undef JBSS_DISPATCH

}  // namespace jbss::kernels
