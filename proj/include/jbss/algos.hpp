#pragma once

// Separation algorithms: maximum-likelihood IVA with MPE source models
// (IVA-G is the beta = 1 member) and orthogonal joint diagonalization of
// lagged cross-covariances (JDIAG-SOS).

#include "jbss/core.hpp"
#include "jbss/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace jbss {

struct FitOptions {
  Index max_iterations = 2048;
  /// Stop when the largest relative-gradient entry falls below this (IVA),
  /// or when the relative decrease of the off-diagonal energy does (JDIAG).
  double tolerance = 1e-7;
  double initial_step = 0.1;
  bool whitening = true;
  /// One entry: known shape for every source. Several: per-source selection.
  std::vector<double> beta_candidates{1.0};
  /// Known per-source shapes; overrides beta_candidates when set.
  std::optional<std::vector<double>> source_betas;
  /// Attempts allowed when a descent turns singular.
  Index restarts = 1;
  /// Starting points (the first equivariant, the rest random orthogonal);
  /// the lowest final cost is kept.
  Index starts = 1;
  /// L-BFGS memory.
  Index memory = 10;

  void validate() const;
};

struct FitResult {
  DemixingEnsemble demixing{std::vector<Matrix>{Matrix::Identity(1, 1)}};
  std::vector<double> objective_trace;
  std::vector<double> selected_beta;
  bool converged = false;
  /// Summed over branches and starts.
  Index iterations = 0;
  Index restarts_used = 0;
  /// JDIAG-SOS only: the orthogonal factors U^[k] with W^[k] = U^[k] Q^[k].
  std::vector<Matrix> rotations;
};

// ---------------------------------------------------------------------------
// Whitening

/// (X X^T / V)^(-1/2); the data are taken as zero mean.
Matrix whitening_matrix(const Matrix& x);

// ---------------------------------------------------------------------------
// IVA objective and gradients

/// Fixed-dispersion objective
///   (1/V) sum_n sum_v (1/2) (y_n(v)^T Sigma_n^-1 y_n(v))^beta_n - sum_k log|det W^[k]|.
double iva_objective(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta,
                     std::span<const Matrix> dispersions);

/// d/dW^[k] of iva_objective: (1/V) Phi^[k] X^[k]^T - W^[k]^-T.
std::vector<Matrix> iva_gradient(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta,
                                 std::span<const Matrix> dispersions);

/// Per-sample negative log-likelihood with each source's dispersion profiled
/// out as lambda_n S_n, S_n = (1/V) Y_n Y_n^T and lambda_n its maximum-
/// likelihood scale:
///   sum_n [K/(2 beta_n) + (1/2) log det(lambda_n S_n) - log c_K(beta_n)] - sum_k log|det W^[k]|.
/// This is the quantity fit_iva_mpe minimizes; it is invariant to row scaling.
double iva_profiled_objective(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta);

/// d/dW^[k] of iva_profiled_objective.
std::vector<Matrix> iva_profiled_gradient(const DemixingEnsemble& w, const DatasetEnsemble& x,
                                          std::span<const double> beta);

/// Per-source terms of iva_profiled_objective (without the log-det terms).
Vector iva_source_costs(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta);

// ---------------------------------------------------------------------------
// Fitting

/// Whitens, starts from an equivariant rotation of the whitened data, and
/// runs L-BFGS on the relative gradient with Armijo backtracking. With
/// several beta candidates every candidate is run for all sources, and the
/// branch with the smallest selected total cost is refined with its per-source
/// choice. Rows of the result have unit output variance and positive output skew.
FitResult fit_iva_mpe(const DatasetEnsemble& x, const FitOptions& opts, RngHandle& rng);

/// As fit_iva_mpe from a given starting demixing ensemble (no whitening or
/// initial rotation; betas fixed per source).
FitResult refine_iva_mpe(const DatasetEnsemble& x, const DemixingEnsemble& w0, std::span<const double> beta,
                         const FitOptions& opts);

/// Lagged cross-covariances of whitened datasets averaged over lags +l and -l,
/// C^[k1,k2](l) = (1/(2(V-l))) sum_v [z^[k1](v) z^[k2](v-l)^T + z^[k1](v-l) z^[k2](v)^T].
/// Index [l][k1 * K + k2].
std::vector<std::vector<Matrix>> lagged_cross_covariances(std::span<const Matrix> z, Index n_lags);

/// Sum of squared off-diagonal entries of U^[k1] C^[k1,k2](l) U^[k2]^T over
/// all terms except the identity lag-0 auto terms.
double jdiag_off_energy(std::span<const Matrix> rotations, const std::vector<std::vector<Matrix>>& c);

/// JDIAG-SOS(L): lags 0..L-1, Jacobi sweeps over (dataset, coordinate pair)
/// with the exact optimal angle of each rotation.
FitResult fit_jdiag_sos(const DatasetEnsemble& x, Index n_lags, const FitOptions& opts);

}  // namespace jbss
