#include "jbss/kernels.hpp"
#include "jbss/score.hpp"
#include "jbss/sources.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace jbss;

namespace {

double mpe_log_h(const Vector& y, double beta, const Matrix& sigma_inv) {
  const double u = y.dot(sigma_inv * y);
  return -0.5 * std::pow(u, beta);
}

}  // namespace

TEST_CASE("Gaussian score") {
  Matrix y(2, 1);
  y << 1.0, 2.0;
  CHECK(gaussian_score(y, Matrix::Identity(2, 2)).phi == y);

  Matrix r(2, 2);
  r << 2.0, 0.0, 0.0, 4.0;
  Matrix expected(2, 1);
  expected << 0.5, 0.5;
  CHECK((gaussian_score(y, r).phi - expected).norm() < 1e-15);

  RngHandle rng(200, 0);
  const Matrix cov = oracle::random_spd(3, rng);
  const Matrix cinv = cov.inverse();
  const Vector x = rng.normal_matrix(3, 1);
  const Vector fd = -oracle::finite_difference_gradient(
      [&](const Vector& z) { return -0.5 * z.dot(cinv * z); }, x);
  CHECK((gaussian_score(x, cov).phi.col(0) - fd).norm() < 1e-6 * fd.norm());
}

TEST_CASE("MPE score reduces to the Gaussian score at beta = 1") {
  RngHandle rng(201, 0);
  const Matrix sigma = oracle::random_spd(4, rng);
  const Matrix y = rng.normal_matrix(4, 37);
  CHECK((mpe_score(y, 1.0, sigma).phi - gaussian_score(y, sigma).phi).norm() < 1e-12 * y.norm());
}

TEST_CASE("MPE scalar score example") {
  Matrix y(1, 1);
  y << 2.0;
  CHECK(mpe_score(y, 2.0, Matrix::Identity(1, 1)).phi(0, 0) == doctest::Approx(16.0).epsilon(1e-14));
}

TEST_CASE("MPE score agrees with finite differences of the log density") {
  RngHandle rng(202, 0);
  for (const double beta : {3.0, 0.6}) {
    const Matrix sigma = oracle::random_spd(5, rng);
    const Matrix sinv = sigma.inverse();
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Vector y = rng.normal_matrix(5, 1);
      const Vector fd = -oracle::finite_difference_gradient(
          [&](const Vector& z) { return mpe_log_h(z, beta, sinv); }, y, 1e-5);
      const Vector phi = mpe_score(y, beta, sigma).phi.col(0);
      worst = std::max(worst, (phi - fd).norm() / phi.norm());
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("MPE score rejects the origin for beta < 1") {
  const Matrix y = Matrix::Zero(3, 2);
  CHECK_THROWS_WITH_AS(mpe_score(y, 0.5, Matrix::Identity(3, 3)), "score undefined at origin", Error);
  CHECK_NOTHROW(mpe_score(y, 2.0, Matrix::Identity(3, 3)));
}

TEST_CASE("MPE score agrees across kernel backends") {
  RngHandle rng(203, 0);
  const Matrix sigma = oracle::random_spd(6, rng);
  const Matrix y = rng.normal_matrix(6, 1003);
  const kernels::Backend original = kernels::active_backend();
  kernels::set_backend(kernels::Backend::Scalar);
  const ScoreEval a = mpe_score(y, 2.7, sigma);
  if (kernels::avx2_available()) {
    kernels::set_backend(kernels::Backend::Avx2);
    const ScoreEval b = mpe_score(y, 2.7, sigma);
    CHECK((a.phi - b.phi).norm() <= 1e-12 * a.phi.norm());
    CHECK(*a.log_density == doctest::Approx(*b.log_density).epsilon(1e-12));
  }
  kernels::set_backend(original);
}

TEST_CASE("kappa equals one at beta = 1") {
  for (const Index k : {2, 3, 5, 10}) {
    const KappaResult r = kappa_elliptical(1.0, k, Matrix::Identity(k, k));
    CHECK(std::abs(r.kappa - 1.0) < 1e-8);
    CHECK(std::abs(r.rho - 1.0) < 1e-8);
  }
}

TEST_CASE("kappa matches closed-form and Simpson oracles") {
  for (const Index k : {2, 3, 5, 8}) {
    for (const double beta : {0.3, 0.5, 0.8, 1.5, 2.0, 4.0, 6.0, 10.0}) {
      const double closed = oracle::mpe_kappa_closed(k, beta);
      const KappaResult r = kappa_elliptical(beta, k, Matrix::Identity(k, k));
      CHECK(r.kappa == doctest::Approx(closed).epsilon(1e-9));
      CHECK(r.rho == doctest::Approx(oracle::mpe_radial_moment_closed(k, beta, 2.0) / k).epsilon(1e-10));
      CHECK(r.kappa > 1.0);
    }
  }
  // Simpson cross-check of the closed form itself at one smooth point.
  const double beta = 2.0;
  const Index k = 5;
  const double simpson = beta * beta * oracle::mpe_radial_moment_simpson(k, beta, 4.0 * beta - 2.0) *
                         oracle::mpe_radial_moment_simpson(k, beta, 2.0) / (k * k);
  CHECK(simpson == doctest::Approx(oracle::mpe_kappa_closed(k, beta)).epsilon(1e-8));
}

TEST_CASE("kappa grows with distance from beta = 1") {
  const Index k = 4;
  double prev = kappa_elliptical(1.0, k, Matrix::Identity(k, k)).kappa;
  for (double beta = 1.25; beta <= 10.0; beta += 0.25) {
    const double cur = kappa_elliptical(beta, k, Matrix::Identity(k, k)).kappa;
    CHECK(cur > prev);
    prev = cur;
  }
  prev = kappa_elliptical(1.0, k, Matrix::Identity(k, k)).kappa;
  for (double beta = 0.9; beta >= 0.2; beta -= 0.1) {
    const double cur = kappa_elliptical(beta, k, Matrix::Identity(k, k)).kappa;
    CHECK(cur > prev);
    prev = cur;
  }
}

TEST_CASE("dispersion normalization rescales by rho") {
  const KappaResult c = kappa_elliptical(3.0, 4, Matrix::Identity(4, 4), KappaNormalization::Covariance);
  const KappaResult d = kappa_elliptical(3.0, 4, Matrix::Identity(4, 4), KappaNormalization::Dispersion);
  CHECK(d.kappa == doctest::Approx(c.kappa / c.rho).epsilon(1e-12));
}

TEST_CASE("ICA kappa") {
  // Unit-variance Laplace: E[phi^2] = 2.
  CHECK(kappa_ica(0.5).kappa == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(kappa_ica(1.0).kappa == doctest::Approx(1.0).epsilon(1e-8));
  CHECK_THROWS_AS(kappa_ica(0.25), Error);
}

TEST_CASE("MPE normalizing constant integrates to one") {
  // c_K * surface(S^{K-1}) * int r^{K-1} exp(-r^{2 beta}/2) dr = 1, with the
  // radial integral from the closed-form Gamma identity.
  for (const Index k : {1, 2, 3, 6}) {
    for (const double beta : {0.5, 1.0, 2.5}) {
      const double kd = static_cast<double>(k);
      const double log_surface = std::log(2.0) + 0.5 * kd * std::log(M_PI) - std::lgamma(0.5 * kd);
      const double a = kd / (2.0 * beta);
      // int_0^inf r^{K-1} e^{-r^{2b}/2} dr = 2^{a-1} Gamma(a) / b.
      const double log_radial = (a - 1.0) * std::log(2.0) + std::lgamma(a) - std::log(beta);
      CHECK(mpe_log_normalizer(k, beta) + log_surface + log_radial == doctest::Approx(0.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("Monte-Carlo Gamma estimates") {
  RngHandle rng(204, 0);

  SUBCASE("Gaussian identity") {
    const GammaEstimate g = estimate_gamma_mc(SourceModel::gaussian(Matrix::Identity(3, 3)), 100000, rng);
    for (Index i = 0; i < 3; ++i) {
      for (Index j = 0; j < 3; ++j) {
        CHECK(std::abs(g.gamma(i, j) - (i == j ? 1.0 : 0.0)) < 4.0 * g.standard_error(i, j));
      }
    }
  }

  SUBCASE("MPE beta = 0.5 matches kappa R^-1 within five percent") {
    const Index k = 5;
    const Matrix r = random_correlation_matrix(k, rng);
    const double rho = mpe_rho(k, 0.5);
    const SourceModel m = SourceModel::mpe(0.5, r / rho);
    const GammaEstimate g = estimate_gamma_mc(m, 1000000, rng);
    const Matrix expected = score_covariance(m);
    CHECK((expected - kappa_elliptical(0.5, k, m.dispersion()).kappa * r.inverse()).norm() < 1e-9 * expected.norm());
    CHECK(oracle::rel_frobenius(g.gamma, expected) < 0.05);
  }

  SUBCASE("MPE beta = 3 and the Gaussian limit") {
    const Index k = 4;
    const Matrix sigma = oracle::random_spd(k, rng);
    const SourceModel m = SourceModel::mpe(3.0, sigma);
    const GammaEstimate g = estimate_gamma_mc(m, 200000, rng);
    const Matrix expected = score_covariance(m);
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < k; ++j) {
        CHECK(std::abs(g.gamma(i, j) - expected(i, j)) < 4.5 * g.standard_error(i, j));
      }
    }
    const SourceModel m1 = SourceModel::mpe(1.0, sigma);
    const GammaEstimate g1 = estimate_gamma_mc(m1, 100000, rng);
    const GammaEstimate gg = estimate_gamma_mc(SourceModel::gaussian(sigma), 100000, rng);
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < k; ++j) {
        const double joint = std::hypot(g1.standard_error(i, j), gg.standard_error(i, j));
        CHECK(std::abs(g1.gamma(i, j) - gg.gamma(i, j)) < 4.5 * joint);
      }
    }
  }

  SUBCASE("draw floor") {
    CHECK_THROWS_AS(estimate_gamma_mc(SourceModel::gaussian(Matrix::Identity(2, 2)), 100, rng), Error);
  }
}

TEST_CASE("Gamma dominates the inverse covariance") {
  RngHandle rng(205, 0);
  const Index k = 4;
  for (const double beta : {0.5, 1.0, 2.0, 5.0}) {
    const Matrix sigma = oracle::random_spd(k, rng);
    const SourceModel m = SourceModel::mpe(beta, sigma);
    const Matrix diff = score_covariance(m) - marginal_covariance(m).inverse();
    const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(diff).eigenvalues().minCoeff();
    CHECK(min_eig > -1e-10);

    const GammaEstimate g = estimate_gamma_mc(m, 100000, rng);
    const Matrix mc_diff = g.gamma - marginal_covariance(m).inverse();
    const double mc_min = Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (mc_diff + mc_diff.transpose())).eigenvalues().minCoeff();
    CHECK(mc_min > -4.0 * k * g.standard_error.maxCoeff());
  }
}

TEST_CASE("score-signal cross moments") {
  RngHandle rng(206, 0);
  const Index k = 3;
  const Index draws = 200000;
  for (const double beta : {0.7, 1.0, 3.0}) {
    const Matrix sigma = oracle::random_spd(k, rng);
    const SourceModel m = SourceModel::mpe(beta, sigma);
    const Matrix s = sample_mpe_scv(m, draws, rng).data();
    const Matrix phi = mpe_score(s, beta, sigma).phi;

    // E[s phi^T] = I.
    const Matrix cross = s * phi.transpose() / static_cast<double>(draws);
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < k; ++j) {
        const Eigen::ArrayXd prod = s.row(i).array() * phi.row(j).array();
        const double se = std::sqrt((prod - prod.mean()).square().mean() / draws);
        CHECK(std::abs(cross(i, j) - (i == j ? 1.0 : 0.0)) < 4.0 * se);
      }
    }

    // E[phi_a s_a phi_b s_b] against the closed form.
    const Matrix fourth = score_signal_fourth_moment(m);
    const Eigen::ArrayXXd ps = phi.array() * s.array();
    for (Index a = 0; a < k; ++a) {
      for (Index b = 0; b < k; ++b) {
        const Eigen::ArrayXd prod = ps.row(a) * ps.row(b);
        const double se = std::sqrt((prod - prod.mean()).square().mean() / draws);
        CHECK(std::abs(prod.mean() - fourth(a, b)) < 4.5 * se);
      }
    }
  }
}
