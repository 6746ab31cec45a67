#include "jbss/score.hpp"

#include "jbss/kernels.hpp"
#include "jbss/quadrature.hpp"
#include "jbss/sources.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace jbss {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// u[v] = y_v^T P y_v through the dispatched kernel.
Vector column_quadratic_forms(const Matrix& y, const Matrix& p) {
  const RowMatrix rows = y;
  const RowMatrix prow = p;
  std::vector<const double*> ptrs(static_cast<std::size_t>(rows.rows()));
  for (Index i = 0; i < rows.rows(); ++i) {
    ptrs[static_cast<std::size_t>(i)] = rows.row(i).data();
  }
  Vector u(y.cols());
  kernels::quadratic_forms(ptrs, static_cast<std::size_t>(y.cols()), prow.data(), u.data());
  return u;
}


ScoreEval dense_gaussian_score(const Matrix& y, const Matrix& sample_cov) {
  const Index k = y.rows();
  const Index v = y.cols();
  if (sample_cov.rows() != k * v) {
    throw Error("sample covariance does not match the realization size");
  }
  const Eigen::LLT<Matrix> llt(sample_cov);
  if (llt.info() != Eigen::Success) {
    throw Error("sample covariance is not positive definite");
  }
  const Eigen::Map<const Vector> stacked(y.data(), k * v);
  const Vector phi = llt.solve(stacked);
  ScoreEval out;
  out.phi = Eigen::Map<const Matrix>(phi.data(), k, v);
  out.log_density = -0.5 * stacked.dot(phi) - 0.5 * log_det_spd(sample_cov);
  return out;
}

// log integrand of the radial integrals in x = log r coordinates.
struct LogRadial {
  const EllipticalGenerator& gen;
  Index k;
  const std::function<double(double)>& log_w;
  double operator()(double x) const {
    return log_w(x) + static_cast<double>(k) * x + gen.log_h(2.0 * x);
  }
};

struct LogIntegral {
  double log_scale = 0.0;
  double value = 0.0;  // integral of exp(L - log_scale)
  double rel_error = 0.0;
};

LogIntegral integrate_log_radial(const LogRadial& log_f) {
  constexpr double kLo = -60.0;
  constexpr double kHi = 60.0;
  constexpr double kStep = 0.02;
  constexpr double kDrop = 80.0;
  const int n = static_cast<int>((kHi - kLo) / kStep);
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(n + 1));
  for (int i = 0; i <= n; ++i) {
    const double val = log_f(kLo + kStep * i);
    grid[static_cast<std::size_t>(i)] = std::isfinite(val) ? val : -std::numeric_limits<double>::infinity();
    peak = std::max(peak, grid[static_cast<std::size_t>(i)]);
  }
  if (!std::isfinite(peak)) {
    throw Error("radial integrand is not finite anywhere");
  }
  if (grid.back() > peak - kDrop) {
    throw Error("radial integral diverges or its mass lies outside the search window");
  }
  // Small-r tails are power laws in r and can decay slowly in log r; walk
  // further left until they are negligible.
  double a = kLo;
  if (grid.front() > peak - kDrop) {
    constexpr double kFarLo = -1e4;
    while (a > kFarLo) {
      a -= 1.0;
      const double val = log_f(a);
      if (!std::isfinite(val) || val < peak - kDrop) break;
    }
    if (a <= kFarLo) {
      throw Error("radial integral diverges or its mass lies outside the search window");
    }
  } else {
    int first = 0;
    while (grid[static_cast<std::size_t>(first)] < peak - kDrop) ++first;
    a = kLo + kStep * std::max(first - 1, 0);
  }
  int last = n;
  while (grid[static_cast<std::size_t>(last)] < peak - kDrop) --last;
  const double b = kLo + kStep * std::min(last + 1, n);
  const auto f = [&](double x) {
    const double val = log_f(x);
    return std::isfinite(val) ? std::exp(val - peak) : 0.0;
  };
  const QuadratureResult q = integrate_adaptive(f, a, b, 0.0, 1e-13);
  if (!q.converged) {
    throw Error("radial quadrature did not converge");
  }
  return {peak, q.value, q.abs_error / q.value};
}

}  // namespace

ScoreEval gaussian_score(const Matrix& y, const Matrix& covariance) {
  require_spd(covariance, "covariance");
  if (y.rows() != covariance.rows()) {
    throw Error("gaussian_score: dimension mismatch");
  }
  const Eigen::LLT<Matrix> llt(covariance);
  ScoreEval out;
  out.phi = llt.solve(y);
  out.log_density = -0.5 * (y.array() * out.phi.array()).sum() -
                    0.5 * static_cast<double>(y.cols()) * log_det_spd(covariance);
  return out;
}

ScoreEval mpe_score(const Matrix& y, double beta, const Matrix& dispersion) {
  if (!(beta > 0.0)) {
    throw Error("MPE shape parameter must be > 0");
  }
  require_spd(dispersion, "dispersion");
  if (y.rows() != dispersion.rows()) {
    throw Error("mpe_score: dimension mismatch");
  }
  const Matrix precision = spd_inverse(dispersion);
  const Vector u = column_quadratic_forms(y, precision);
  Vector weight(u.size());
  double quad_sum = 0.0;
  for (Index v = 0; v < u.size(); ++v) {
    if (u(v) == 0.0 && beta < 1.0) {
      throw Error("score undefined at origin");
    }
    weight(v) = beta == 1.0 ? 1.0 : (u(v) == 0.0 ? 0.0 : beta * std::pow(u(v), beta - 1.0));
    quad_sum += std::pow(u(v), beta);
  }
  ScoreEval out;
  out.phi = (precision * y) * weight.asDiagonal();
  out.log_density = -0.5 * quad_sum - 0.5 * static_cast<double>(y.cols()) * log_det_spd(dispersion);
  return out;
}

ScoreEval model_score(const SourceModel& model, const Matrix& y) {
  if (y.rows() != model.k_datasets()) {
    throw Error("realization does not match the model's K");
  }
  switch (model.family()) {
    case SourceFamily::MpeScv:
      return mpe_score(y, model.shape_beta(), model.dispersion());
    case SourceFamily::VectorMaGaussian:
      if (model.ma_taps().size() == 1) {
        return gaussian_score(y, model.dispersion());
      }
      return dense_gaussian_score(y, ma_sample_covariance(model.ma_taps(), y.cols()));
    case SourceFamily::GaussianScv:
      break;
  }
  if (model.sample_covariance()) {
    return dense_gaussian_score(y, *model.sample_covariance());
  }
  return gaussian_score(y, model.dispersion());
}

EllipticalGenerator EllipticalGenerator::mpe(double beta) {
  if (!(beta > 0.0)) {
    throw Error("MPE shape parameter must be > 0");
  }
  EllipticalGenerator gen;
  gen.log_h = [beta](double log_u) { return -0.5 * std::exp(beta * log_u); };
  gen.log_g = [beta](double log_u) { return std::log(beta) + (beta - 1.0) * log_u; };
  return gen;
}

RadialExpectation radial_expectation(const EllipticalGenerator& gen, Index k,
                                     const std::function<double(double)>& log_w) {
  if (k < 1) {
    throw Error("K must be >= 1");
  }
  static const std::function<double(double)> unit = [](double) { return 0.0; };
  const LogIntegral num = integrate_log_radial(LogRadial{gen, k, log_w});
  const LogIntegral den = integrate_log_radial(LogRadial{gen, k, unit});
  RadialExpectation out;
  out.value = std::exp(num.log_scale - den.log_scale) * num.value / den.value;
  out.rel_error = num.rel_error + den.rel_error;
  return out;
}

namespace {

KappaResult kappa_from_generator(const EllipticalGenerator& gen, Index k) {
  const RadialExpectation second = radial_expectation(gen, k, [](double x) { return 2.0 * x; });
  const RadialExpectation score_energy =
      radial_expectation(gen, k, [&gen](double x) { return 2.0 * gen.log_g(2.0 * x) + 2.0 * x; });
  const double kd = static_cast<double>(k);
  KappaResult out;
  out.rho = second.value / kd;
  out.kappa = out.rho * score_energy.value / kd;
  out.quadrature_abs_error = out.kappa * (second.rel_error + score_energy.rel_error);
  if (!(out.quadrature_abs_error < 1e-8) || !std::isfinite(out.kappa)) {
    throw Error("kappa quadrature did not reach 1e-8 absolute accuracy");
  }
  return out;
}

}  // namespace

KappaResult kappa_elliptical(double beta, Index k, const Matrix& dispersion, KappaNormalization mode) {
  if (k < 2) {
    throw Error("kappa_elliptical needs K >= 2; use kappa_ica for K = 1");
  }
  if (!(beta > 0.0)) {
    throw Error("MPE shape parameter must be > 0");
  }
  if (dispersion.rows() != k) {
    throw Error("dispersion must be K x K");
  }
  require_spd(dispersion, "dispersion");
  KappaResult out = kappa_from_generator(EllipticalGenerator::mpe(beta), k);
  if (mode == KappaNormalization::Dispersion) {
    out.kappa /= out.rho;
    out.quadrature_abs_error /= out.rho;
  }
  return out;
}

KappaResult kappa_ica(double beta) {
  if (!(beta > 0.25)) {
    throw Error("scalar power exponential score energy is infinite for beta <= 1/4");
  }
  return kappa_from_generator(EllipticalGenerator::mpe(beta), 1);
}

double mpe_rho(Index k, double beta) {
  const EllipticalGenerator gen = EllipticalGenerator::mpe(beta);
  return radial_expectation(gen, k, [](double x) { return 2.0 * x; }).value / static_cast<double>(k);
}

double mpe_log_normalizer(Index k, double beta) {
  const double kd = static_cast<double>(k);
  return std::log(beta) + std::lgamma(0.5 * kd) - 0.5 * kd * std::log(std::numbers::pi) -
         std::lgamma(kd / (2.0 * beta)) - kd / (2.0 * beta) * std::log(2.0);
}

Matrix marginal_covariance(const SourceModel& model) {
  if (model.family() == SourceFamily::MpeScv) {
    return mpe_rho(model.k_datasets(), model.shape_beta()) * model.dispersion();
  }
  return model.dispersion();
}

Matrix score_covariance(const SourceModel& model) {
  if (!model.is_iid()) {
    throw Error("closed-form Gamma needs an i.i.d. model");
  }
  const Matrix r = marginal_covariance(model);
  const Matrix r_inv = spd_inverse(r);
  if (model.family() != SourceFamily::MpeScv || model.shape_beta() == 1.0) {
    return r_inv;
  }
  const Index k = model.k_datasets();
  const double kappa = k >= 2 ? kappa_elliptical(model.shape_beta(), k, model.dispersion()).kappa
                              : kappa_ica(model.shape_beta()).kappa;
  return kappa * r_inv;
}

Matrix score_signal_fourth_moment(const SourceModel& model) {
  if (!model.is_iid()) {
    throw Error("fourth moment closed form needs an i.i.d. model");
  }
  const Index k = model.k_datasets();
  const Matrix& sigma = model.dispersion();
  double c4 = 1.0;
  if (model.family() == SourceFamily::MpeScv && model.shape_beta() != 1.0) {
    const EllipticalGenerator gen = EllipticalGenerator::mpe(model.shape_beta());
    const RadialExpectation m =
        radial_expectation(gen, k, [&gen](double x) { return 2.0 * gen.log_g(2.0 * x) + 4.0 * x; });
    c4 = m.value / static_cast<double>(k * (k + 2));
  }
  const Matrix p = spd_inverse(sigma);
  Matrix out = Matrix::Ones(k, k) + p.cwiseProduct(sigma) + Matrix::Identity(k, k);
  return c4 * out;
}

GammaEstimate estimate_gamma_mc(const SourceModel& model, Index draws, RngHandle& rng) {
  if (draws < 10000) {
    throw Error("estimate_gamma_mc needs at least 1e4 draws");
  }
  if (!model.is_iid()) {
    throw Error("model has no per-sample score");
  }
  const Index k = model.k_datasets();
  constexpr Index kChunk = 8192;
  Matrix sum = Matrix::Zero(k, k);
  Matrix sum_sq = Matrix::Zero(k, k);
  for (Index done = 0; done < draws; done += kChunk) {
    const Index n = std::min(kChunk, draws - done);
    const SourceComponentMatrix s = sample_source(model, n, rng);
    const Matrix phi = model_score(model, s.data()).phi;
    sum.noalias() += phi * phi.transpose();
    const Matrix sq = phi.array().square().matrix();
    // E[(phi_a phi_b)^2] for the standard errors.
    sum_sq.noalias() += sq * sq.transpose();
  }
  const double m = static_cast<double>(draws);
  GammaEstimate out;
  out.gamma = sum / m;
  const Matrix var = (sum_sq / m - out.gamma.cwiseProduct(out.gamma)).cwiseMax(0.0);
  out.standard_error = (var / m).cwiseSqrt();
  out.draws = draws;
  return out;
}

}  // namespace jbss
