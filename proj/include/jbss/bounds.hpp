#pragma once

// Induced Cramer-Rao lower bounds on the pairwise interference-to-source
// ratio. Every path reduces to inverting the top-left block of F_{m,n}:
//   ISR_{m,n} >= (1/V) tr{ (K_{m,n} - K_{n,m}^-1)^-1 o C_n / C_m }.

#include "jbss/core.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace jbss {

enum class BoundRegime { General, Iid, Elliptical, IcaIid, IcaGauss };

std::string to_string(BoundRegime regime);

struct PairBound {
  /// +inf when the pair is not identifiable.
  double value = std::numeric_limits<double>::infinity();
  bool finite = false;
  /// Per-dataset terms; they sum to `value`.
  Vector per_dataset;
  /// Empty for finite bounds.
  std::string diagnosis;
};

/// The bracket K_{m,n} - K_{n,m}^-1 is treated as singular when its condition
/// number exceeds this, or its smallest singular value is below
/// kBracketRelTol times the larger of |K_{m,n}| and |K_{n,m}^-1|.
inline constexpr double kBracketMaxCondition = 1e12;
inline constexpr double kBracketRelTol = 1e-12;

/// General (sample-dependent) form. c_m and c_n are K x K covariances; only
/// their diagonals (per-dataset source energies) enter.
PairBound isr_bound_general(const Matrix& k_mn, const Matrix& k_nm, const Matrix& c_m, const Matrix& c_n,
                            Index v_samples);

/// i.i.d. samples: K_{m,n} = Gamma_m o R_n.
PairBound isr_bound_iid(const Matrix& gamma_m, const Matrix& gamma_n, const Matrix& r_m, const Matrix& r_n,
                        Index v_samples);

/// Elliptical closed form with Gamma = kappa R^-1.
PairBound isr_bound_elliptical(double kappa_m, double kappa_n, const Matrix& r_m, const Matrix& r_n,
                               Index v_samples);

/// K = 1, i.i.d.: (1/V) kappa_n / (kappa_m kappa_n - 1).
PairBound isr_bound_ica_iid(double kappa_m, double kappa_n, Index v_samples);

/// K = 1 Gaussian sources with V x V sample covariances. The energy ratio
/// tr(R_n) / tr(R_m) is included.
PairBound isr_bound_ica_gauss(const Matrix& r_m, const Matrix& r_n, Index v_samples);

struct BoundReport {
  /// N x N, diagonal is NaN.
  Matrix pairwise;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> finite;
  /// per_dataset[k](m, n).
  std::vector<Matrix> per_dataset;
  /// sum_{m != n} V bound_{m,n}; +inf if any pair is unbounded.
  double total_normalized = 0.0;
  BoundRegime regime = BoundRegime::General;
  Index v_samples = 0;
  std::vector<std::string> diagnoses;

  /// True when every off-diagonal pair is bounded.
  bool all_finite() const;
  /// Rows: m,n,k,bound,finite,regime; k is "total" for the summed row.
  std::string to_csv() const;
};

/// Bound report for a list of source models at sample size V. The regime
/// tag follows the model families: i.i.d. elliptical (Elliptical for K >= 2,
/// IcaIid for K = 1), sample-dependent (General, IcaGauss for K = 1).
BoundReport bound_report(const std::vector<SourceModel>& models, Index v_samples);

struct MonotonicityReport {
  Index checks = 0;
  std::vector<std::string> violations;
};

/// Checks, for a fixed covariance pair, that (a) every elliptical bound on
/// the kappa grid is at most the Gaussian bound (kappa = 1 for both) and
/// (b) the bound is non-increasing in kappa_m for every fixed kappa_n.
MonotonicityReport check_bound_monotonicity(const Matrix& r_m, const Matrix& r_n,
                                            std::span<const double> kappa_grid, Index v_samples);

}  // namespace jbss
