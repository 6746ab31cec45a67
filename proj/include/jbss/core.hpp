#pragma once

// Domain types and small dense-matrix helpers shared by every module.
//
// All matrices are dense Eigen matrices. Sizes are small (K, N <= 16) except
// for the K x V source component matrices and the optional sample-dependent
// covariances, which are handled column-wise.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jbss {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Error raised for contract violations (bad shapes, singular inputs, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigenvalue-ratio threshold used for every SPD validation.
inline constexpr double kSpdRatio = 1e-12;

/// One source's realization across all datasets: row k is the source in
/// dataset k, column v is sample v.
class SourceComponentMatrix {
 public:
  explicit SourceComponentMatrix(Matrix data);

  const Matrix& data() const { return data_; }
  Index k_datasets() const { return data_.rows(); }
  Index v_samples() const { return data_.cols(); }

 private:
  Matrix data_;
};

/// K observation matrices X^[k] (N x V), optionally with the ground truth
/// mixing matrices and sources that produced them.
class DatasetEnsemble {
 public:
  explicit DatasetEnsemble(std::vector<Matrix> observations,
                           std::optional<std::vector<Matrix>> mixing = std::nullopt,
                           std::optional<std::vector<SourceComponentMatrix>> sources = std::nullopt);

  Index n_sources() const { return observations_.front().rows(); }
  Index k_datasets() const { return static_cast<Index>(observations_.size()); }
  Index v_samples() const { return observations_.front().cols(); }

  const std::vector<Matrix>& observations() const { return observations_; }
  const Matrix& observation(Index k) const { return observations_[static_cast<std::size_t>(k)]; }
  bool has_ground_truth() const { return mixing_.has_value() && sources_.has_value(); }
  const std::optional<std::vector<Matrix>>& mixing() const { return mixing_; }
  const std::optional<std::vector<SourceComponentMatrix>>& sources() const { return sources_; }

  /// S^[k]: row k of every source stacked into an N x V matrix.
  Matrix source_matrix(Index k) const;

 private:
  std::vector<Matrix> observations_;
  std::optional<std::vector<Matrix>> mixing_;
  std::optional<std::vector<SourceComponentMatrix>> sources_;
};

/// The K demixing matrices W^[k].
class DemixingEnsemble {
 public:
  explicit DemixingEnsemble(std::vector<Matrix> matrices);

  Index n_sources() const { return matrices_.front().rows(); }
  Index k_datasets() const { return static_cast<Index>(matrices_.size()); }
  const std::vector<Matrix>& matrices() const { return matrices_; }
  const Matrix& operator[](Index k) const { return matrices_[static_cast<std::size_t>(k)]; }

  /// Throws unless shapes agree with `x` (N x N per dataset, same K).
  void check_compatible(const DatasetEnsemble& x) const;

 private:
  std::vector<Matrix> matrices_;
};

enum class SourceFamily { GaussianScv, MpeScv, VectorMaGaussian };

std::string to_string(SourceFamily family);

/// Statistical description of one source component vector.
class SourceModel {
 public:
  /// i.i.d. zero-mean Gaussian SCV with K x K covariance R.
  static SourceModel gaussian(Matrix covariance);
  /// Gaussian SCM with full sample dependence. `sample_covariance` is the
  /// KV x KV covariance of the sample-major stacking [s(1); s(2); ...; s(V)].
  static SourceModel gaussian_process(Matrix sample_covariance, Index k_datasets);
  /// Multivariate power exponential with dispersion Sigma and shape beta.
  static SourceModel mpe(double beta, Matrix dispersion);
  /// s(v) = sum_l B_l z(v - l), z ~ N(0, I_K).
  static SourceModel vector_ma(std::vector<Matrix> taps);

  SourceFamily family() const { return family_; }
  Index k_datasets() const { return k_; }
  double shape_beta() const { return beta_; }
  const Matrix& dispersion() const { return dispersion_; }
  const std::vector<Matrix>& ma_taps() const { return taps_; }
  const std::optional<Matrix>& sample_covariance() const { return sample_cov_; }

  /// True when the whole SCV is jointly Gaussian (Gaussian families, MPE with beta = 1).
  bool is_gaussian() const;
  /// True when samples are independent across v.
  bool is_iid() const;

 private:
  SourceModel() = default;

  SourceFamily family_ = SourceFamily::GaussianScv;
  Index k_ = 0;
  double beta_ = 1.0;
  Matrix dispersion_;
  std::vector<Matrix> taps_;
  std::optional<Matrix> sample_cov_;
};

// ---------------------------------------------------------------------------
// Matrix helpers

/// Shortest round-trip decimal text; "inf", "-inf" and "nan" for non-finite values.
std::string format_double(double x);

/// Block-diagonal matrix with `blocks` on the diagonal, in order.
Matrix direct_sum(std::span<const Matrix> blocks);

/// tr(A o C o/ D): trace of the Hadamard product of A and C divided
/// element-wise by D. Only diagonal entries contribute.
double hadamard_quotient_trace(const Matrix& a, const Matrix& c, const Matrix& d);

/// Kronecker product.
Matrix kron(const Matrix& a, const Matrix& b);

bool is_symmetric(const Matrix& m, double tol = 1e-10);
/// Symmetric with min eigenvalue > ratio * max eigenvalue.
bool is_spd(const Matrix& m, double ratio = kSpdRatio);
/// Throws Error(`what` + " is not symmetric positive definite") otherwise.
void require_spd(const Matrix& m, const std::string& what);

/// Symmetric square root and inverse square root of an SPD matrix.
Matrix spd_sqrt(const Matrix& m);
Matrix spd_inv_sqrt(const Matrix& m);
/// Symmetrized inverse via Cholesky; throws if not positive definite.
Matrix spd_inverse(const Matrix& m);
double log_det_spd(const Matrix& m);

/// 2-norm condition number via SVD (infinite for singular input).
double condition_number(const Matrix& m);
double log_abs_det(const Matrix& m);

/// Lag-`lag` autocovariance of the vector MA process: sum_j B_{j+lag} B_j^T.
Matrix ma_lag_covariance(std::span<const Matrix> taps, Index lag);

/// KV x KV sample-major covariance of V consecutive samples of a vector MA process.
Matrix ma_sample_covariance(std::span<const Matrix> taps, Index v_samples);

}  // namespace jbss
