#pragma once

#include "jbss/core.hpp"
#include "jbss/rng.hpp"

#include <vector>

namespace jbss {

/// How mixing matrices are drawn: standard normal entries, resampled until
/// the condition number is at most `max_condition`.
struct MixingSpec {
  Index n_sources = 0;
  Index k_datasets = 0;
  double max_condition = 1e6;
  int max_attempts = 100;
  /// Test hook: use A^[k] = I instead of random draws.
  bool identity = false;
};

/// V i.i.d. columns from the K-variate power exponential with the model's
/// dispersion and shape. Radius from t = r^(2 beta) / 2 ~ Gamma(K / (2 beta)),
/// direction uniform on the sphere, colored by Sigma^(1/2).
SourceComponentMatrix sample_mpe_scv(const SourceModel& model, Index v_samples, RngHandle& rng);

/// V i.i.d. zero-mean Gaussian columns with the given covariance.
SourceComponentMatrix sample_gaussian_scv(const Matrix& covariance, Index v_samples, RngHandle& rng);

/// s(v) = sum_l B_l z(v - l) with L - 1 warm-up innovations so the first
/// sample already has full history.
SourceComponentMatrix sample_vector_ma(const SourceModel& model, Index v_samples, RngHandle& rng);

/// Dispatches on the model family. Gaussian models with a sample covariance
/// are drawn through its Cholesky factor (V must match its size).
SourceComponentMatrix sample_source(const SourceModel& model, Index v_samples, RngHandle& rng);

/// One N x N mixing matrix drawn under the condition guard.
Matrix draw_mixing_matrix(const MixingSpec& spec, RngHandle& rng);

/// Stacks row k of every SCM into S^[k], draws A^[k] and returns X^[k] = A^[k] S^[k]
/// with the ground truth attached.
DatasetEnsemble mix(std::vector<SourceComponentMatrix> sources, const MixingSpec& spec, RngHandle& rng);

/// Random K x K correlation matrix (unit diagonal) from a normalized Wishart-like draw.
Matrix random_correlation_matrix(Index k, RngHandle& rng);

/// L random K x K tap matrices with standard normal entries.
std::vector<Matrix> random_ma_taps(Index k, Index l, RngHandle& rng);

}  // namespace jbss
