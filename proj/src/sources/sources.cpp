#include "jbss/sources.hpp"

#include <cmath>

namespace jbss {

SourceComponentMatrix sample_mpe_scv(const SourceModel& model, Index v_samples, RngHandle& rng) {
  if (model.family() != SourceFamily::MpeScv) {
    throw Error("sample_mpe_scv needs an MPE model");
  }
  if (v_samples < 1) {
    throw Error("V must be >= 1");
  }
  const Index k = model.k_datasets();
  const double beta = model.shape_beta();
  const Matrix root = spd_sqrt(model.dispersion());
  const double shape = static_cast<double>(k) / (2.0 * beta);
  Matrix out(k, v_samples);
  Vector dir(k);
  for (Index v = 0; v < v_samples; ++v) {
    const double t = rng.gamma(shape);
    const double r = std::pow(2.0 * t, 1.0 / (2.0 * beta));
    double norm = 0.0;
    do {
      for (Index i = 0; i < k; ++i) {
        dir(i) = rng.normal();
      }
      norm = dir.norm();
    } while (norm == 0.0);
    out.col(v) = root * (dir * (r / norm));
  }
  return SourceComponentMatrix(std::move(out));
}

SourceComponentMatrix sample_gaussian_scv(const Matrix& covariance, Index v_samples, RngHandle& rng) {
  require_spd(covariance, "covariance");
  if (v_samples < 1) {
    throw Error("V must be >= 1");
  }
  const Eigen::LLT<Matrix> llt(covariance);
  const Matrix z = rng.normal_matrix(covariance.rows(), v_samples);
  return SourceComponentMatrix(llt.matrixL() * z);
}

SourceComponentMatrix sample_vector_ma(const SourceModel& model, Index v_samples, RngHandle& rng) {
  if (model.family() != SourceFamily::VectorMaGaussian) {
    throw Error("sample_vector_ma needs a vector MA model");
  }
  const auto& taps = model.ma_taps();
  if (taps.empty()) {
    throw Error("empty tap list");
  }
  if (v_samples < 1) {
    throw Error("V must be >= 1");
  }
  const Index k = model.k_datasets();
  const Index l = static_cast<Index>(taps.size());
  // Column c of z is the innovation at time c - (L - 1).
  const Matrix z = rng.normal_matrix(k, v_samples + l - 1);
  Matrix out = Matrix::Zero(k, v_samples);
  for (Index lag = 0; lag < l; ++lag) {
    out.noalias() += taps[static_cast<std::size_t>(lag)] * z.middleCols(l - 1 - lag, v_samples);
  }
  return SourceComponentMatrix(std::move(out));
}

SourceComponentMatrix sample_source(const SourceModel& model, Index v_samples, RngHandle& rng) {
  switch (model.family()) {
    case SourceFamily::MpeScv:
      return sample_mpe_scv(model, v_samples, rng);
    case SourceFamily::VectorMaGaussian:
      return sample_vector_ma(model, v_samples, rng);
    case SourceFamily::GaussianScv:
      break;
  }
  if (!model.sample_covariance()) {
    return sample_gaussian_scv(model.dispersion(), v_samples, rng);
  }
  const Matrix& cov = *model.sample_covariance();
  const Index k = model.k_datasets();
  if (cov.rows() != k * v_samples) {
    throw Error("sample covariance does not cover V samples");
  }
  const Eigen::LLT<Matrix> llt(cov);
  const Vector stacked = llt.matrixL() * rng.normal_matrix(cov.rows(), 1);
  return SourceComponentMatrix(Eigen::Map<const Matrix>(stacked.data(), k, v_samples));
}

Matrix draw_mixing_matrix(const MixingSpec& spec, RngHandle& rng) {
  if (spec.n_sources < 1) {
    throw Error("mixing spec needs N >= 1");
  }
  if (spec.identity) {
    return Matrix::Identity(spec.n_sources, spec.n_sources);
  }
  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    Matrix a = rng.normal_matrix(spec.n_sources, spec.n_sources);
    if (condition_number(a) <= spec.max_condition) {
      return a;
    }
  }
  throw Error("mixing condition guard exhausted");
}

DatasetEnsemble mix(std::vector<SourceComponentMatrix> sources, const MixingSpec& spec, RngHandle& rng) {
  if (sources.empty()) {
    throw Error("mix needs at least one source");
  }
  const Index n = static_cast<Index>(sources.size());
  const Index k = sources.front().k_datasets();
  const Index v = sources.front().v_samples();
  for (const auto& s : sources) {
    if (s.k_datasets() != k || s.v_samples() != v) {
      throw Error("sources must share K and V");
    }
  }
  if (spec.n_sources != n || spec.k_datasets != k) {
    throw Error("mixing spec does not match the sources");
  }
  std::vector<Matrix> observations;
  std::vector<Matrix> mixing;
  observations.reserve(static_cast<std::size_t>(k));
  mixing.reserve(static_cast<std::size_t>(k));
  for (Index kk = 0; kk < k; ++kk) {
    Matrix s(n, v);
    for (Index i = 0; i < n; ++i) {
      s.row(i) = sources[static_cast<std::size_t>(i)].data().row(kk);
    }
    Matrix a = draw_mixing_matrix(spec, rng);
    observations.push_back(a * s);
    mixing.push_back(std::move(a));
  }
  return DatasetEnsemble(std::move(observations), std::move(mixing), std::move(sources));
}

Matrix random_correlation_matrix(Index k, RngHandle& rng) {
  const Matrix b = rng.normal_matrix(k, k);
  Matrix s = b * b.transpose() + 0.1 * Matrix::Identity(k, k);
  const Vector d = s.diagonal().cwiseSqrt().cwiseInverse();
  Matrix r = d.asDiagonal() * s * d.asDiagonal();
  r.diagonal().setOnes();
  return 0.5 * (r + r.transpose());
}

std::vector<Matrix> random_ma_taps(Index k, Index l, RngHandle& rng) {
  std::vector<Matrix> taps;
  taps.reserve(static_cast<std::size_t>(l));
  for (Index i = 0; i < l; ++i) {
    taps.push_back(rng.normal_matrix(k, k));
  }
  return taps;
}

}  // namespace jbss
