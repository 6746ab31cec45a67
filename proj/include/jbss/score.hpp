#pragma once

// Score functions phi = -d log p / ds, score covariances Gamma and the
// elliptical non-Gaussianity scalar kappa (Gamma = kappa R^-1).

#include "jbss/core.hpp"
#include "jbss/rng.hpp"

#include <functional>
#include <optional>

namespace jbss {

struct ScoreEval {
  /// K x V, column v is the score of column v of the input.
  Matrix phi;
  /// log density summed over columns, up to the family's normalizing constant.
  std::optional<double> log_density;
};

/// phi = R^-1 y, column by column.
ScoreEval gaussian_score(const Matrix& y, const Matrix& covariance);

/// phi = g(y^T Sigma^-1 y) Sigma^-1 y with g(u) = beta u^(beta - 1).
/// Throws for an exactly-zero column when beta < 1.
ScoreEval mpe_score(const Matrix& y, double beta, const Matrix& dispersion);

/// Score of a whole K x V realization under a model. i.i.d. models are scored
/// column by column; sample-dependent Gaussian models use their full KV x KV
/// covariance.
ScoreEval model_score(const SourceModel& model, const Matrix& y);

/// Density generator h_e and its score weight g(u) = -2 h_e'(u) / h_e(u),
/// both taken as functions of log u so the radial integrals can run in
/// log-radius coordinates.
struct EllipticalGenerator {
  std::function<double(double)> log_h;
  std::function<double(double)> log_g;

  /// h_e(u) = exp(-u^beta / 2), g(u) = beta u^(beta - 1).
  static EllipticalGenerator mpe(double beta);
};

struct RadialExpectation {
  double value = 0.0;
  double rel_error = 0.0;
};

/// E[w(r)] under the radial law p(r) ∝ r^(K-1) h_e(r^2), where `log_w` gives
/// log w as a function of log r. Self-normalized, so no c_K is involved.
RadialExpectation radial_expectation(const EllipticalGenerator& gen, Index k,
                                     const std::function<double(double)>& log_w);

enum class KappaNormalization {
  /// Gamma = kappa R^-1 with R the covariance.
  Covariance,
  /// Gamma = kappa Sigma^-1 with Sigma the dispersion.
  Dispersion,
};

struct KappaResult {
  double kappa = 1.0;
  /// R = rho Sigma.
  double rho = 1.0;
  double quadrature_abs_error = 0.0;
};

/// kappa for a K-variate MPE (K >= 2). Computes E[g^2(r^2) r^2] and
/// rho = E[r^2] / K by adaptive quadrature; kappa = rho E[g^2 r^2] / K.
KappaResult kappa_elliptical(double beta, Index k, const Matrix& dispersion,
                             KappaNormalization mode = KappaNormalization::Covariance);

/// Scalar (K = 1) path: kappa = E[phi^2] for a unit-variance power
/// exponential source. Finite only for beta > 1/4.
KappaResult kappa_ica(double beta);

/// rho = E[s s^T] Sigma^-1 scale for a K-variate MPE.
double mpe_rho(Index k, double beta);

/// log c_K for the normalized MPE density c_K |Sigma|^-1/2 exp(-(x^T Sigma^-1 x)^beta / 2).
double mpe_log_normalizer(Index k, double beta);

/// Marginal K x K covariance of one sample: R for Gaussian, rho Sigma for MPE,
/// the lag-0 covariance for vector MA.
Matrix marginal_covariance(const SourceModel& model);

/// Closed-form Gamma = E[phi phi^T] for i.i.d. models: R^-1 (Gaussian),
/// kappa R^-1 (MPE). Throws for sample-dependent models.
Matrix score_covariance(const SourceModel& model);

/// Single-sample fourth moment E[phi_a s_a phi_b s_b] for i.i.d. elliptical
/// models (Gaussian is the beta = 1 member): c4 (1 + (Sigma^-1 o Sigma)_ab + delta_ab)
/// with c4 = E[g^2(r^2) r^4] / (K (K + 2)).
Matrix score_signal_fourth_moment(const SourceModel& model);

struct GammaEstimate {
  Matrix gamma;
  /// Per-entry Monte-Carlo standard error of gamma.
  Matrix standard_error;
  Index draws = 0;
};

/// Monte-Carlo E[phi phi^T] from `draws` i.i.d. samples (draws >= 1e4).
GammaEstimate estimate_gamma_mc(const SourceModel& model, Index draws, RngHandle& rng);

}  // namespace jbss
