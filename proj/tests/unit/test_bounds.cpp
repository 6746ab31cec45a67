#include "jbss/bounds.hpp"
#include "jbss/fim.hpp"
#include "jbss/score.hpp"
#include "jbss/sources.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <array>

using namespace jbss;

namespace {

// Independent evaluation: invert the full 2K x 2K pair block of the FIM and
// read the CRLB on w_{m,n} off its top-left diagonal.
double bound_via_full_inverse(const Matrix& k_mn, const Matrix& k_nm, const Matrix& c_m, const Matrix& c_n, Index v) {
  const Index k = k_mn.rows();
  Matrix f(2 * k, 2 * k);
  f << v * k_mn, v * Matrix::Identity(k, k), v * Matrix::Identity(k, k), v * k_nm;
  const Matrix crlb = f.fullPivLu().inverse();
  double total = 0.0;
  for (Index i = 0; i < k; ++i) total += crlb(i, i) * c_n(i, i) / c_m(i, i);
  return total;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("general bound examples") {
  const Index k = 3, v = 100;
  const Matrix eye = Matrix::Identity(k, k);
  const PairBound inf = isr_bound_general(eye, eye, eye, eye, v);
  CHECK_FALSE(inf.finite);
  CHECK(std::isinf(inf.value));

  const double km = 1.7, kn = 2.4;
  const PairBound b = isr_bound_general(km * eye, kn * eye, eye, eye, v);
  CHECK(b.finite);
  CHECK(b.value == doctest::Approx(double(k) / v * kn / (km * kn - 1.0)).epsilon(1e-14));
  CHECK(b.per_dataset.sum() == doctest::Approx(b.value).epsilon(1e-15));

  RngHandle rng(400, 0);
  for (int t = 0; t < 20; ++t) {
    const Matrix gm = oracle::random_spd(k, rng, 0.8, 3.0);
    const Matrix gn = oracle::random_spd(k, rng, 0.8, 3.0);
    const Matrix rm = oracle::random_spd(k, rng);
    const Matrix rn = oracle::random_spd(k, rng);
    const Matrix a = gm.cwiseProduct(rn);
    const Matrix c = gn.cwiseProduct(rm);
    const PairBound pb = isr_bound_general(a, c, rm, rn, v);
    if (pb.finite) {
      CHECK(rel(pb.value, bound_via_full_inverse(a, c, rm, rn, v)) < 1e-10);
    }
  }
}

TEST_CASE("elliptical bound examples") {
  const Index k = 2, v = 1000;
  RngHandle rng(401, 0);
  const Matrix r = oracle::random_spd(k, rng);
  const PairBound g = isr_bound_elliptical(1.0, 1.0, r, r, v);
  CHECK_FALSE(g.finite);
  CHECK(g.diagnosis == "Gaussian/proportional-covariance pair");

  const PairBound id = isr_bound_elliptical(1.5, 3.0, Matrix::Identity(4, 4), Matrix::Identity(4, 4), v);
  CHECK(id.value == doctest::Approx(4.0 / v * 3.0 / (1.5 * 3.0 - 1.0)).epsilon(1e-13));

  Matrix rn(2, 2);
  rn << 1.0, 0.5, 0.5, 1.0;
  const Matrix rm = Matrix::Identity(2, 2);
  const PairBound e = isr_bound_elliptical(2.0, 2.0, rm, rn, v);
  const PairBound gen = isr_bound_general(k_matrix_iid(2.0 * rm.inverse(), rn).values,
                                          k_matrix_iid(2.0 * rn.inverse(), rm).values, rm, rn, v);
  CHECK(rel(e.value, gen.value) < 1e-12);
  // Frozen value: K_mn = 2 [[1, 0], [0, 1]] o [[1, .5], [.5, 1]] = 2I,
  // K_nm = 2 (4/3) [[1, -.5], [-.5, 1]] o I = (8/3) I, bracket = (2 - 3/8) I.
  CHECK(e.value == doctest::Approx(2.0 / v / (2.0 - 3.0 / 8.0)).epsilon(1e-13));
}

TEST_CASE("ICA i.i.d. bound") {
  CHECK(isr_bound_ica_iid(2.0, 2.0, 1000).value == doctest::Approx(2.0 / 3.0 / 1000.0).epsilon(1e-15));
  CHECK(isr_bound_ica_iid(1e12, 2.0, 1000).value < 1e-14);
  CHECK_FALSE(isr_bound_ica_iid(1.0, 1.0, 1000).finite);

  const double k3 = kappa_ica(3.0).kappa;
  const double k05 = kappa_ica(0.5).kappa;
  const PairBound direct = isr_bound_ica_iid(k3, k05, 500);
  const Matrix one = Matrix::Identity(1, 1);
  const PairBound gen = isr_bound_general(k3 * one, k05 * one, one, one, 500);
  CHECK(rel(direct.value, gen.value) < 1e-12);
}

TEST_CASE("ICA Gaussian sample-dependent bound") {
  const Matrix eye = Matrix::Identity(2, 2);
  CHECK_FALSE(isr_bound_ica_gauss(eye, eye, 2).finite);
  CHECK_FALSE(isr_bound_ica_gauss(4.0 * eye, eye, 2).finite);

  Matrix rn(2, 2);
  rn << 2.0, 0.0, 0.0, 0.5;
  // K_mn = K_nm = 1.25; energy ratio tr(R_n) / tr(R_m) = 1.25.
  const PairBound b = isr_bound_ica_gauss(eye, rn, 2);
  CHECK(b.value == doctest::Approx(0.5 / (1.25 - 0.8) * 1.25).epsilon(1e-14));

  const Index v = 40;
  Matrix ar(v, v), ar2(v, v);
  for (Index i = 0; i < v; ++i) {
    for (Index j = 0; j < v; ++j) {
      ar(i, j) = std::pow(0.6, std::abs(i - j));
      ar2(i, j) = 2.0 * std::pow(-0.3, std::abs(i - j));
    }
  }
  const PairBound t = isr_bound_ica_gauss(ar, ar2, v);
  const double kmn = (ar.inverse() * ar2).trace() / v;
  const double knm = (ar2.inverse() * ar).trace() / v;
  const Matrix k1 = Matrix::Constant(1, 1, kmn), k2 = Matrix::Constant(1, 1, knm);
  const Matrix cm = Matrix::Constant(1, 1, ar.trace() / v), cn = Matrix::Constant(1, 1, ar2.trace() / v);
  REQUIRE(t.finite);
  CHECK(rel(t.value, bound_via_full_inverse(k1, k2, cm, cn, v)) < 1e-10);
}

TEST_CASE("bound paths agree on random configurations") {
  RngHandle rng(402, 0);
  int compared = 0;
  for (int t = 0; t < 100; ++t) {
    const Index k = std::array<Index, 3>{2, 3, 5}[t % 3];
    const Index v = 1000;
    const Matrix rm = random_correlation_matrix(k, rng) * (0.5 + rng.uniform());
    const Matrix rn = random_correlation_matrix(k, rng) * (0.5 + rng.uniform());
    const double bm = 0.3 + 5.0 * rng.uniform();
    const double bn = 0.3 + 5.0 * rng.uniform();
    const double km = kappa_elliptical(bm, k, rm).kappa;
    const double kn = kappa_elliptical(bn, k, rn).kappa;
    const PairBound ell = isr_bound_elliptical(km, kn, rm, rn, v);
    const PairBound iid = isr_bound_iid(km * rm.inverse(), kn * rn.inverse(), rm, rn, v);
    const std::vector<SourceModel> models{SourceModel::mpe(bm, rm / mpe_rho(k, bm)),
                                          SourceModel::mpe(bn, rn / mpe_rho(k, bn))};
    const BoundReport rep = bound_report(models, v);
    REQUIRE(ell.finite);
    CHECK(rel(iid.value, ell.value) < 1e-10);
    CHECK(rel(rep.pairwise(0, 1), ell.value) < 1e-10);
    ++compared;
  }
  // K = 1 path.
  for (int t = 0; t < 20; ++t) {
    const double km = kappa_ica(0.3 + 4.0 * rng.uniform()).kappa;
    const double kn = kappa_ica(0.3 + 4.0 * rng.uniform()).kappa;
    const Matrix one = Matrix::Identity(1, 1);
    CHECK(rel(isr_bound_ica_iid(km, kn, 300).value, isr_bound_elliptical(km, kn, one, one, 300).value) < 1e-10);
  }
  CHECK(compared == 100);
}

TEST_CASE("bounds are monotone in kappa and dominated by the Gaussian bound") {
  RngHandle rng(403, 0);
  const std::vector<double> grid{1.0, 1.05, 1.1, 1.5, 2.0, 3.0, 8.0};
  Index total_checks = 0;
  for (int t = 0; t < 100; ++t) {
    const Index k = std::array<Index, 3>{2, 3, 5}[t % 3];
    const Matrix rm = oracle::random_spd(k, rng);
    const Matrix rn = oracle::random_spd(k, rng);
    const MonotonicityReport rep = check_bound_monotonicity(rm, rn, grid, 1000);
    CHECK(rep.violations.empty());
    total_checks += rep.checks;
  }
  CHECK(total_checks == 100 * 2 * 49);

  // Same beta for both sources with a shared covariance: Gaussian is worst.
  const Matrix r = oracle::random_spd(3, rng);
  double worst = 0.0, worst_beta = 0.0;
  for (const double beta : {0.5, 1.0, 2.0, 4.0}) {
    const double kap = kappa_elliptical(beta, 3, r).kappa;
    const PairBound b = isr_bound_elliptical(kap, kap, r, 2.0 * r + Matrix::Identity(3, 3), 1000);
    if (b.value > worst) {
      worst = b.value;
      worst_beta = beta;
    }
  }
  CHECK(worst_beta == 1.0);

  // Equal kappa gives equal bounds.
  const Matrix a = oracle::random_spd(2, rng), b = oracle::random_spd(2, rng);
  CHECK(isr_bound_elliptical(2.0, 3.0, a, b, 10).value == isr_bound_elliptical(2.0, 3.0, a, b, 10).value);
}

TEST_CASE("bound report") {
  const Index k = 2;
  const std::vector<SourceModel> gauss{SourceModel::gaussian(Matrix::Identity(k, k)),
                                       SourceModel::gaussian(Matrix::Identity(k, k)),
                                       SourceModel::mpe(3.0, Matrix::Identity(k, k))};
  const BoundReport rep = bound_report(gauss, 100);
  CHECK(rep.regime == BoundRegime::Elliptical);
  CHECK_FALSE(rep.finite(0, 1));
  CHECK(rep.finite(0, 2));
  CHECK(std::isinf(rep.total_normalized));
  CHECK(rep.diagnoses.size() == 2);

  const std::vector<SourceModel> mpe{SourceModel::mpe(3.0, Matrix::Identity(k, k)),
                                     SourceModel::mpe(0.5, Matrix::Identity(k, k))};
  const BoundReport r2 = bound_report(mpe, 100);
  CHECK(r2.total_normalized == doctest::Approx(100.0 * (r2.pairwise(0, 1) + r2.pairwise(1, 0))).epsilon(1e-14));
  const std::string csv = r2.to_csv();
  CHECK(csv.rfind("m,n,k,bound,finite,regime\n", 0) == 0);
  CHECK(csv.find("0,1,total,") != std::string::npos);
  CHECK(csv.find(",true,elliptical\n") != std::string::npos);
  // 2 ordered pairs x (K + 1) rows plus header.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * (k + 1));

  RngHandle rng(404, 0);
  const std::vector<SourceModel> ma{SourceModel::vector_ma(random_ma_taps(3, 2, rng)),
                                    SourceModel::vector_ma(random_ma_taps(3, 3, rng))};
  const BoundReport r3 = bound_report(ma, 50);
  CHECK(r3.regime == BoundRegime::General);
  CHECK(r3.all_finite());
  CHECK(r3.pairwise(0, 1) > 0.0);
}
