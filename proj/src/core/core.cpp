#include "jbss/core.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace jbss {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_square(const Matrix& m, const std::string& what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(what + " must be a non-empty square matrix");
  }
}

}  // namespace

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

SourceComponentMatrix::SourceComponentMatrix(Matrix data) : data_(std::move(data)) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw Error("source component matrix must be non-empty");
  }
  if (!all_finite(data_)) {
    throw Error("source component matrix has non-finite entries");
  }
}

DatasetEnsemble::DatasetEnsemble(std::vector<Matrix> observations,
                                 std::optional<std::vector<Matrix>> mixing,
                                 std::optional<std::vector<SourceComponentMatrix>> sources)
    : observations_(std::move(observations)), mixing_(std::move(mixing)), sources_(std::move(sources)) {
  if (observations_.empty()) {
    throw Error("dataset ensemble needs at least one dataset");
  }
  const Index n = observations_.front().rows();
  const Index v = observations_.front().cols();
  if (n < 1 || v < 1) {
    throw Error("observation matrices must be non-empty");
  }
  for (const auto& x : observations_) {
    if (x.rows() != n || x.cols() != v) {
      throw Error("observation matrices must share N and V");
    }
    if (!all_finite(x)) {
      throw Error("observation matrix has non-finite entries");
    }
  }
  if (mixing_) {
    if (mixing_->size() != observations_.size()) {
      throw Error("mixing ensemble must have one matrix per dataset");
    }
    for (const auto& a : *mixing_) {
      if (a.rows() != n || a.cols() != n) {
        throw Error("mixing matrices must be N x N");
      }
      if (!(condition_number(a) < 1e12)) {
        throw Error("mixing matrix is numerically singular");
      }
    }
  }
  if (sources_) {
    if (static_cast<Index>(sources_->size()) != n) {
      throw Error("ground truth must hold one SCM per source");
    }
    for (const auto& s : *sources_) {
      if (s.k_datasets() != k_datasets() || s.v_samples() != v) {
        throw Error("ground truth SCM shape does not match the ensemble");
      }
    }
  }
  if (mixing_ && sources_) {
    for (Index k = 0; k < k_datasets(); ++k) {
      const Matrix& x = observation(k);
      const Matrix residual = x - (*mixing_)[static_cast<std::size_t>(k)] * source_matrix(k);
      const double scale = std::max(x.norm(), std::numeric_limits<double>::min());
      if (residual.norm() >= 1e-10 * scale) {
        throw Error("observations do not equal A^[k] S^[k]");
      }
    }
  }
}

Matrix DatasetEnsemble::source_matrix(Index k) const {
  if (!sources_) {
    throw Error("ensemble carries no ground-truth sources");
  }
  Matrix s(n_sources(), v_samples());
  for (Index n = 0; n < n_sources(); ++n) {
    s.row(n) = (*sources_)[static_cast<std::size_t>(n)].data().row(k);
  }
  return s;
}

DemixingEnsemble::DemixingEnsemble(std::vector<Matrix> matrices) : matrices_(std::move(matrices)) {
  if (matrices_.empty()) {
    throw Error("demixing ensemble needs at least one matrix");
  }
  const Index n = matrices_.front().rows();
  for (const auto& w : matrices_) {
    require_square(w, "demixing matrix");
    if (w.rows() != n) {
      throw Error("demixing matrices must share N");
    }
    if (!(condition_number(w) < 1e14)) {
      throw Error("demixing matrix is singular");
    }
  }
}

void DemixingEnsemble::check_compatible(const DatasetEnsemble& x) const {
  if (k_datasets() != x.k_datasets() || n_sources() != x.n_sources()) {
    throw Error("demixing ensemble shape does not match the datasets");
  }
}

std::string to_string(SourceFamily family) {
  switch (family) {
    case SourceFamily::GaussianScv:
      return "gaussian";
    case SourceFamily::MpeScv:
      return "mpe";
    case SourceFamily::VectorMaGaussian:
      return "vector-ma";
  }
  return "unknown";
}

SourceModel SourceModel::gaussian(Matrix covariance) {
  require_spd(covariance, "covariance");
  SourceModel m;
  m.family_ = SourceFamily::GaussianScv;
  m.k_ = covariance.rows();
  m.dispersion_ = std::move(covariance);
  return m;
}

SourceModel SourceModel::gaussian_process(Matrix sample_covariance, Index k_datasets) {
  if (k_datasets < 1 || sample_covariance.rows() % k_datasets != 0) {
    throw Error("sample covariance size must be a multiple of K");
  }
  require_spd(sample_covariance, "sample covariance");
  const Index v = sample_covariance.rows() / k_datasets;
  Matrix marginal = Matrix::Zero(k_datasets, k_datasets);
  for (Index t = 0; t < v; ++t) {
    marginal += sample_covariance.block(t * k_datasets, t * k_datasets, k_datasets, k_datasets);
  }
  marginal /= static_cast<double>(v);
  SourceModel m;
  m.family_ = SourceFamily::GaussianScv;
  m.k_ = k_datasets;
  m.dispersion_ = std::move(marginal);
  m.sample_cov_ = std::move(sample_covariance);
  return m;
}

SourceModel SourceModel::mpe(double beta, Matrix dispersion) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw Error("MPE shape parameter must be > 0");
  }
  require_spd(dispersion, "dispersion");
  SourceModel m;
  m.family_ = SourceFamily::MpeScv;
  m.k_ = dispersion.rows();
  m.beta_ = beta;
  m.dispersion_ = std::move(dispersion);
  return m;
}

SourceModel SourceModel::vector_ma(std::vector<Matrix> taps) {
  if (taps.empty()) {
    throw Error("vector MA model needs at least one tap matrix");
  }
  const Index k = taps.front().rows();
  for (const auto& b : taps) {
    if (b.rows() != k || b.cols() != k || k == 0) {
      throw Error("MA taps must all be K x K");
    }
  }
  Matrix lag0 = ma_lag_covariance(taps, 0);
  require_spd(lag0, "MA lag-0 covariance");
  SourceModel m;
  m.family_ = SourceFamily::VectorMaGaussian;
  m.k_ = k;
  m.dispersion_ = std::move(lag0);
  m.taps_ = std::move(taps);
  return m;
}

bool SourceModel::is_gaussian() const {
  return family_ != SourceFamily::MpeScv || beta_ == 1.0;
}

bool SourceModel::is_iid() const {
  if (family_ == SourceFamily::VectorMaGaussian) {
    return taps_.size() == 1;
  }
  return !sample_cov_.has_value();
}

Matrix direct_sum(std::span<const Matrix> blocks) {
  if (blocks.empty()) {
    throw Error("empty direct sum");
  }
  Index size = 0;
  for (const auto& b : blocks) {
    require_square(b, "direct sum block");
    size += b.rows();
  }
  Matrix out = Matrix::Zero(size, size);
  Index offset = 0;
  for (const auto& b : blocks) {
    out.block(offset, offset, b.rows(), b.cols()) = b;
    offset += b.rows();
  }
  return out;
}

double hadamard_quotient_trace(const Matrix& a, const Matrix& c, const Matrix& d) {
  if (a.rows() != a.cols() || c.rows() != a.rows() || c.cols() != a.cols() || d.rows() != a.rows() ||
      d.cols() != a.cols()) {
    throw Error("hadamard_quotient_trace: operands must share one square shape");
  }
  if ((d.array() == 0.0).any()) {
    throw Error("Hadamard division by zero");
  }
  double sum = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    sum += a(i, i) * c(i, i) / d(i, i);
  }
  return sum;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(m.cwiseAbs().maxCoeff(), 1.0);
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool is_spd(const Matrix& m, double ratio) {
  if (m.rows() == 0 || m.rows() != m.cols() || !m.allFinite() || !is_symmetric(m)) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  return hi > 0.0 && lo > ratio * hi;
}

void require_spd(const Matrix& m, const std::string& what) {
  if (!is_spd(m)) {
    throw Error(what + " is not symmetric positive definite");
  }
}

Matrix spd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  return eig.operatorSqrt();
}

Matrix spd_inverse(const Matrix& m) {
  const Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw Error("matrix is not positive definite");
  }
  Matrix inv = llt.solve(Matrix::Identity(m.rows(), m.cols()));
  return 0.5 * (inv + inv.transpose());
}

double log_det_spd(const Matrix& m) {
  const Eigen::LLT<Matrix> llt(m);
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Matrix spd_inv_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
  return eig.operatorInverseSqrt();
}

double condition_number(const Matrix& m) {
  if (m.size() == 0 || !m.allFinite()) {
    return std::numeric_limits<double>::infinity();
  }
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  if (lo <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return s(0) / lo;
}

double log_abs_det(const Matrix& m) {
  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix& packed = lu.matrixLU();
  double sum = 0.0;
  for (Index i = 0; i < packed.rows(); ++i) {
    sum += std::log(std::abs(packed(i, i)));
  }
  return sum;
}

Matrix ma_lag_covariance(std::span<const Matrix> taps, Index lag) {
  if (taps.empty()) {
    throw Error("empty tap list");
  }
  const Index k = taps.front().rows();
  Matrix c = Matrix::Zero(k, k);
  const Index l = static_cast<Index>(taps.size());
  for (Index j = 0; j + lag < l; ++j) {
    c += taps[static_cast<std::size_t>(j + lag)] * taps[static_cast<std::size_t>(j)].transpose();
  }
  return c;
}

Matrix ma_sample_covariance(std::span<const Matrix> taps, Index v_samples) {
  if (taps.empty()) {
    throw Error("empty tap list");
  }
  const Index k = taps.front().rows();
  const Index l = static_cast<Index>(taps.size());
  Matrix out = Matrix::Zero(k * v_samples, k * v_samples);
  for (Index lag = 0; lag < std::min(l, v_samples); ++lag) {
    const Matrix c = ma_lag_covariance(taps, lag);
    for (Index v = lag; v < v_samples; ++v) {
      out.block(v * k, (v - lag) * k, k, k) = c;
      out.block((v - lag) * k, v * k, k, k) = c.transpose();
    }
  }
  return out;
}

}  // namespace jbss
