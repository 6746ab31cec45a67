#include "jbss/kernels.hpp"
#include "jbss/rng.hpp"

#include <doctest.h>

#include <vector>

using namespace jbss;

namespace {

std::vector<double> draw(RngHandle& rng, std::size_t n) {
  std::vector<double> out(n);
  for (auto& x : out) x = rng.normal();
  return out;
}

double tol(double reference, std::size_t n) { return 1e-13 * static_cast<double>(n + 1) * (1.0 + std::abs(reference)); }

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  RngHandle rng(5, 0);
  const auto x = draw(rng, 17);
  const auto y = draw(rng, 17);
  const auto w = draw(rng, 17);
  double d = 0.0, wd = 0.0;
  for (std::size_t i = 0; i < 17; ++i) {
    d += x[i] * y[i];
    wd += w[i] * x[i] * y[i];
  }
  CHECK(kernels::scalar::dot(x.data(), y.data(), 17) == doctest::Approx(d));
  CHECK(kernels::scalar::weighted_dot(w.data(), x.data(), y.data(), 17) == doctest::Approx(wd));

  // u = y^T P y for K = 2.
  const std::vector<double> p{2.0, 0.5, 0.5, 3.0};
  const double* rows[2] = {x.data(), y.data()};
  std::vector<double> u(17);
  kernels::scalar::quadratic_forms(rows, 17, p.data(), u.data());
  for (std::size_t v = 0; v < 17; ++v) {
    CHECK(u[v] == doctest::Approx(2 * x[v] * x[v] + x[v] * y[v] + 3 * y[v] * y[v]));
  }
}

#if defined(JBSS_HAVE_AVX2_TU)
TEST_CASE("AVX2 kernels agree with the scalar reference") {
  if (!kernels::avx2_available()) {
    MESSAGE("CPU lacks AVX2/FMA; skipping equivalence check");
    return;
  }
  RngHandle rng(6, 0);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 31u, 100u, 1001u}) {
    const auto x = draw(rng, n);
    const auto y = draw(rng, n);
    const auto w = draw(rng, n);
    const double ds = kernels::scalar::dot(x.data(), y.data(), n);
    CHECK(std::abs(kernels::avx2::dot(x.data(), y.data(), n) - ds) <= tol(ds, n));
    const double ws = kernels::scalar::weighted_dot(w.data(), x.data(), y.data(), n);
    CHECK(std::abs(kernels::avx2::weighted_dot(w.data(), x.data(), y.data(), n) - ws) <= tol(ws, n));

    for (std::size_t k : {1u, 2u, 3u, 5u, 8u}) {
      std::vector<std::vector<double>> data;
      std::vector<const double*> rows;
      for (std::size_t a = 0; a < k; ++a) {
        data.push_back(draw(rng, n));
      }
      for (auto& r : data) rows.push_back(r.data());
      std::vector<double> p(k * k);
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b) {
          p[a * k + b] = p[b * k + a] = rng.normal();
        }
      }
      std::vector<double> us(n), uv(n);
      kernels::scalar::quadratic_forms(rows, n, p.data(), us.data());
      kernels::avx2::quadratic_forms(rows, n, p.data(), uv.data());
      for (std::size_t v = 0; v < n; ++v) {
        CHECK(std::abs(us[v] - uv[v]) <= tol(us[v], k * k));
      }
    }
  }
}
#endif

TEST_CASE("backend selection") {
  const kernels::Backend original = kernels::active_backend();
  kernels::set_backend(kernels::Backend::Scalar);
  CHECK(kernels::active_backend() == kernels::Backend::Scalar);
  CHECK(kernels::backend_name(kernels::Backend::Scalar) == "scalar");
  if (kernels::avx2_available()) {
    kernels::set_backend(kernels::Backend::Avx2);
    CHECK(kernels::active_backend() == kernels::Backend::Avx2);
  } else {
    CHECK_THROWS(kernels::set_backend(kernels::Backend::Avx2));
  }
  kernels::set_backend(original);

  std::vector<const double*> too_many(65, nullptr);
  CHECK_THROWS(kernels::quadratic_forms(too_many, 0, nullptr, nullptr));
}
