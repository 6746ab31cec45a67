#include "jbss/algos.hpp"

#include "jbss/kernels.hpp"
#include "jbss/score.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace jbss {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTinyQuad = 1e-300;
constexpr double kArmijo = 1e-4;
constexpr Index kMaxHalvings = 40;
constexpr double kMaxCondition = 1e10;
constexpr double kValueNoise = 1e-13;
constexpr double kCurvature = 0.9;
constexpr double kApproxWolfe = 0.1;

// Rows n of every Y^[k], stacked into a K x V row-major block.
RowMatrix gather(const std::vector<Matrix>& y, Index n) {
  const Index k = static_cast<Index>(y.size());
  RowMatrix out(k, y.front().cols());
  for (Index kk = 0; kk < k; ++kk) out.row(kk) = y[static_cast<std::size_t>(kk)].row(n);
  return out;
}

Vector quadratic_forms(const RowMatrix& yn, const Matrix& p) {
  const Index k = yn.rows();
  std::vector<const double*> rows(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) rows[static_cast<std::size_t>(i)] = yn.row(i).data();
  const RowMatrix pr = p;
  Vector u(yn.cols());
  kernels::quadratic_forms(rows, static_cast<std::size_t>(yn.cols()), pr.data(), u.data());
  return u;
}

struct SourceTerm {
  double cost = kInf;
  /// dCost/dY_n = psi / V.
  RowMatrix psi;
};

// Profiled negative log-likelihood of one SCV and its gradient signal.
SourceTerm profiled_term(const RowMatrix& yn, double beta, bool with_gradient) {
  const Index k = yn.rows();
  const double v = static_cast<double>(yn.cols());
  const double kd = static_cast<double>(k);
  SourceTerm out;
  const Matrix s = yn * yn.transpose() / v;
  const Eigen::LLT<Matrix> llt(s);
  if (llt.info() != Eigen::Success) return out;
  const Matrix p0 = llt.solve(Matrix::Identity(k, k));
  double log_det_s = 0.0;
  for (Index i = 0; i < k; ++i) log_det_s += 2.0 * std::log(llt.matrixL()(i, i));
  const Vector q0 = quadratic_forms(yn, p0).cwiseMax(kTinyQuad);
  const double mean_pow = q0.array().pow(beta).mean();
  const double log_lambda = std::log(beta * mean_pow / kd) / beta;
  out.cost = kd / (2.0 * beta) + 0.5 * (log_det_s + kd * log_lambda) - mpe_log_normalizer(k, beta);
  if (!std::isfinite(out.cost)) {
    out.cost = kInf;
    return out;
  }
  if (!with_gradient) return out;
  const double lambda = std::exp(log_lambda);
  const Matrix p = p0 / lambda;
  const Eigen::ArrayXd w = beta * (q0.array() / lambda).pow(beta - 1.0);
  const RowMatrix py = p * yn;
  RowMatrix phi = py;
  for (Index i = 0; i < k; ++i) phi.row(i).array() *= w.transpose();
  const Matrix b = phi * yn.transpose() / v;
  out.psi = phi + (p0 - b * p0) * yn;
  return out;
}

struct Evaluation {
  double value = kInf;
  std::vector<Matrix> relative_gradient;
};

// Objective and relative gradients H^[k] = (1/V) Psi^[k] Y^[k]^T - I at U.
Evaluation evaluate(const std::vector<Matrix>& u, const std::vector<Matrix>& z, std::span<const double> beta,
                    bool with_gradient) {
  const Index kd = static_cast<Index>(z.size());
  const Index n = u.front().rows();
  const double v = static_cast<double>(z.front().cols());
  Evaluation out;
  double log_det = 0.0;
  std::vector<Matrix> y;
  for (Index k = 0; k < kd; ++k) {
    const Eigen::PartialPivLU<Matrix> lu(u[static_cast<std::size_t>(k)]);
    const double d = std::abs(lu.determinant());
    if (!(d > 0.0) || !std::isfinite(d)) return out;
    log_det += std::log(d);
    y.push_back(u[static_cast<std::size_t>(k)] * z[static_cast<std::size_t>(k)]);
  }
  double total = -log_det;
  std::vector<Matrix> psi;
  if (with_gradient) psi.assign(static_cast<std::size_t>(kd), Matrix(n, z.front().cols()));
  for (Index s = 0; s < n; ++s) {
    const SourceTerm t = profiled_term(gather(y, s), beta[static_cast<std::size_t>(s)], with_gradient);
    if (!std::isfinite(t.cost)) return out;
    total += t.cost;
    if (with_gradient) {
      for (Index k = 0; k < kd; ++k) psi[static_cast<std::size_t>(k)].row(s) = t.psi.row(k);
    }
  }
  out.value = total;
  if (with_gradient) {
    for (Index k = 0; k < kd; ++k) {
      const std::size_t kk = static_cast<std::size_t>(k);
      out.relative_gradient.push_back(psi[kk] * y[kk].transpose() / v - Matrix::Identity(n, n));
    }
  }
  return out;
}

double inner(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) t += a[i].cwiseProduct(b[i]).sum();
  return t;
}

double max_abs(const std::vector<Matrix>& a) {
  double m = 0.0;
  for (const Matrix& x : a) m = std::max(m, x.cwiseAbs().maxCoeff());
  return m;
}

std::vector<Matrix> negated(std::vector<Matrix> a) {
  for (Matrix& m : a) m = -m;
  return a;
}

std::vector<Matrix> axpy(double alpha, const std::vector<Matrix>& x, const std::vector<Matrix>& y) {
  std::vector<Matrix> out = y;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
  return out;
}

struct CurvaturePair {
  std::vector<Matrix> s;
  std::vector<Matrix> y;
  double rho;
};

std::vector<Matrix> two_loop(const std::vector<Matrix>& grad, const std::deque<CurvaturePair>& mem) {
  std::vector<Matrix> q = grad;
  std::vector<double> alpha(mem.size());
  for (std::size_t i = mem.size(); i-- > 0;) {
    alpha[i] = mem[i].rho * inner(mem[i].s, q);
    q = axpy(-alpha[i], mem[i].y, q);
  }
  if (!mem.empty()) {
    const CurvaturePair& last = mem.back();
    const double gamma = inner(last.s, last.y) / inner(last.y, last.y);
    for (Matrix& m : q) m *= gamma;
  }
  for (std::size_t i = 0; i < mem.size(); ++i) {
    const double b = mem[i].rho * inner(mem[i].y, q);
    q = axpy(alpha[i] - b, mem[i].s, q);
  }
  for (Matrix& m : q) m = -m;
  return q;
}

// d/dt of the objective along U(t) = (I + t D) U, evaluated at t = step from
// the relative gradient there.
double directional_derivative(const std::vector<Matrix>& h, const std::vector<Matrix>& dir, double step) {
  double t = 0.0;
  for (std::size_t k = 0; k < dir.size(); ++k) {
    const Index n = dir[k].rows();
    const Matrix m = dir[k] * (Matrix::Identity(n, n) + step * dir[k]).inverse();
    t += h[k].cwiseProduct(m).sum();
  }
  return t;
}

struct RunState {
  std::vector<Matrix> u;
  std::vector<double> trace;
  bool converged = false;
  bool singular = false;
  Index iterations = 0;
};

RunState run_lbfgs(std::vector<Matrix> u, const std::vector<Matrix>& z, std::span<const double> beta,
                   const FitOptions& opts, double offset) {
  RunState st;
  const Index n = u.front().rows();
  const Matrix eye = Matrix::Identity(n, n);
  Evaluation cur = evaluate(u, z, beta, true);
  if (!std::isfinite(cur.value)) {
    st.singular = true;
    st.u = std::move(u);
    return st;
  }
  st.trace.push_back(cur.value + offset);
  std::deque<CurvaturePair> mem;
  for (Index it = 0; it < opts.max_iterations; ++it) {
    const double gmax = max_abs(cur.relative_gradient);
    if (gmax < opts.tolerance) {
      st.converged = true;
      break;
    }
    bool accepted = false;
    bool use_memory = !mem.empty();
    while (true) {
      const std::vector<Matrix> dir = use_memory ? two_loop(cur.relative_gradient, mem) : negated(cur.relative_gradient);
      const double slope = inner(cur.relative_gradient, dir);
      if (use_memory && !(slope < 0.0)) {
        mem.clear();
        use_memory = false;
        continue;
      }
      double step = use_memory ? 1.0 : opts.initial_step / std::max(1.0, gmax);
      const double noise = kValueNoise * std::max(1.0, std::abs(cur.value));
      for (Index h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
        std::vector<Matrix> cand(u.size());
        for (std::size_t k = 0; k < u.size(); ++k) cand[k] = (eye + step * dir[k]) * u[k];
        const double value = evaluate(cand, z, beta, false).value;
        if (!std::isfinite(value)) continue;
        const bool armijo = value <= cur.value + kArmijo * step * slope;
        if (!armijo && value > cur.value + noise) continue;
        Evaluation next = evaluate(cand, z, beta, true);
        if (!armijo) {
          // Decrease below working precision: fall back to the approximate
          // Wolfe test on the directional derivative.
          const double d1 = directional_derivative(next.relative_gradient, dir, step);
          if (!(d1 >= kCurvature * slope && d1 <= (2.0 * kApproxWolfe - 1.0) * slope)) continue;
        }
        CurvaturePair pair{std::vector<Matrix>(dir.size()), std::vector<Matrix>(dir.size()), 0.0};
        for (std::size_t k = 0; k < dir.size(); ++k) {
          pair.s[k] = step * dir[k];
          pair.y[k] = next.relative_gradient[k] - cur.relative_gradient[k];
        }
        const double sy = inner(pair.s, pair.y);
        if (sy > 1e-12 * std::sqrt(inner(pair.s, pair.s) * inner(pair.y, pair.y))) {
          pair.rho = 1.0 / sy;
          mem.push_back(std::move(pair));
          if (static_cast<Index>(mem.size()) > opts.memory) mem.pop_front();
        }
        u = std::move(cand);
        cur = std::move(next);
        accepted = true;
        break;
      }
      if (accepted || !use_memory) break;
      mem.clear();
      use_memory = false;
    }
    if (!accepted) {
      // No decrease is possible at working precision.
      st.converged = max_abs(cur.relative_gradient) < 100.0 * opts.tolerance;
      break;
    }
    ++st.iterations;
    st.trace.push_back(cur.value + offset);
    for (const Matrix& uk : u) {
      if (condition_number(uk) > kMaxCondition) {
        st.singular = true;
        st.u = std::move(u);
        return st;
      }
    }
  }
  if (!st.converged && max_abs(cur.relative_gradient) < opts.tolerance) st.converged = true;
  st.u = std::move(u);
  return st;
}

Matrix sign_by_skew(Matrix u, const Matrix& z) {
  const Matrix y = u * z;
  for (Index r = 0; r < u.rows(); ++r) {
    if (y.row(r).array().cube().sum() < 0.0) u.row(r) *= -1.0;
  }
  return u;
}

// Start point that depends on the data only through the whitened outputs:
// dataset 0 is rotated onto the eigenbasis of a fourth-order plus cross-
// covariance statistic, every other dataset by orthogonal Procrustes onto
// dataset 0.
std::vector<Matrix> equivariant_start(const std::vector<Matrix>& z) {
  const Index kd = static_cast<Index>(z.size());
  const double v = static_cast<double>(z.front().cols());
  const Matrix& z0 = z.front();
  const Eigen::ArrayXd norms = z0.colwise().squaredNorm().transpose().array();
  Matrix zw = z0;
  for (Index c = 0; c < zw.cols(); ++c) zw.col(c) *= norms(c);
  Matrix t = zw * z0.transpose() / v;
  for (Index k = 1; k < kd; ++k) {
    const Matrix c = z0 * z[static_cast<std::size_t>(k)].transpose() / v;
    t += c * c.transpose();
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (t + t.transpose()));
  Matrix u0 = es.eigenvectors().rowwise().reverse().transpose();
  u0 = sign_by_skew(u0, z0);
  std::vector<Matrix> out{u0};
  const Matrix y0 = u0 * z0;
  for (Index k = 1; k < kd; ++k) {
    const Matrix c = y0 * z[static_cast<std::size_t>(k)].transpose() / v;
    const Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.push_back(svd.matrixU() * svd.matrixV().transpose());
  }
  return out;
}

std::vector<Matrix> random_orthogonal_start(Index n, Index kd, RngHandle& rng) {
  std::vector<Matrix> out;
  for (Index k = 0; k < kd; ++k) {
    const Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(n, n));
    out.push_back(qr.householderQ() * Matrix::Identity(n, n));
  }
  return out;
}

DemixingEnsemble normalize_rows(std::vector<Matrix> w, const DatasetEnsemble& x) {
  for (std::size_t k = 0; k < w.size(); ++k) {
    const Matrix y = w[k] * x.observation(static_cast<Index>(k));
    for (Index r = 0; r < w[k].rows(); ++r) {
      const double sd = std::sqrt(y.row(r).squaredNorm() / static_cast<double>(y.cols()));
      if (sd > 0.0) w[k].row(r) /= sd;
      if (y.row(r).array().cube().sum() < 0.0) w[k].row(r) *= -1.0;
    }
  }
  return DemixingEnsemble(std::move(w));
}

void check_beta(std::span<const double> beta, Index n) {
  if (static_cast<Index>(beta.size()) != n) {
    throw Error("one shape parameter per source is required");
  }
  for (double b : beta) {
    if (!(b > 0.0) || !std::isfinite(b)) {
      throw Error("shape parameters must be positive");
    }
  }
}

std::vector<Matrix> data_of(const DatasetEnsemble& x) { return x.observations(); }

}  // namespace

void FitOptions::validate() const {
  if (!(tolerance > 0.0)) throw Error("tolerance must be positive");
  if (max_iterations < 1) throw Error("max_iterations must be >= 1");
  if (!(initial_step > 0.0)) throw Error("initial step must be positive");
  if (restarts < 1) throw Error("restarts must be >= 1");
  if (memory < 1) throw Error("L-BFGS memory must be >= 1");
  if (starts < 1) throw Error("starts must be >= 1");
  if (beta_candidates.empty() && !source_betas) throw Error("at least one shape candidate is required");
  for (double b : beta_candidates) {
    if (!(b > 0.0)) throw Error("shape candidates must be positive");
  }
}

double iva_objective(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta,
                     std::span<const Matrix> dispersions) {
  w.check_compatible(x);
  const Index n = w.n_sources();
  check_beta(beta, n);
  if (static_cast<Index>(dispersions.size()) != n) {
    throw Error("one dispersion per source is required");
  }
  std::vector<Matrix> y;
  double total = 0.0;
  for (Index k = 0; k < w.k_datasets(); ++k) {
    const double d = std::abs(w[k].determinant());
    if (!(d > 0.0)) {
      throw Error("singular demixing matrix");
    }
    total -= std::log(d);
    y.push_back(w[k] * x.observation(k));
  }
  const double v = static_cast<double>(x.v_samples());
  for (Index s = 0; s < n; ++s) {
    const RowMatrix yn = gather(y, s);
    const Vector q = quadratic_forms(yn, spd_inverse(dispersions[static_cast<std::size_t>(s)]));
    total += 0.5 * q.array().pow(beta[static_cast<std::size_t>(s)]).sum() / v;
  }
  return total;
}

std::vector<Matrix> iva_gradient(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta,
                                 std::span<const Matrix> dispersions) {
  w.check_compatible(x);
  const Index n = w.n_sources();
  const Index kd = w.k_datasets();
  check_beta(beta, n);
  std::vector<Matrix> y;
  for (Index k = 0; k < kd; ++k) y.push_back(w[k] * x.observation(k));
  std::vector<Matrix> phi(static_cast<std::size_t>(kd), Matrix(n, x.v_samples()));
  for (Index s = 0; s < n; ++s) {
    const Matrix ys = gather(y, s);
    const ScoreEval e = mpe_score(ys, beta[static_cast<std::size_t>(s)], dispersions[static_cast<std::size_t>(s)]);
    for (Index k = 0; k < kd; ++k) phi[static_cast<std::size_t>(k)].row(s) = e.phi.row(k);
  }
  const double v = static_cast<double>(x.v_samples());
  std::vector<Matrix> out;
  for (Index k = 0; k < kd; ++k) {
    const Eigen::FullPivLU<Matrix> lu(w[k]);
    if (!lu.isInvertible()) {
      throw Error("singular demixing matrix");
    }
    out.push_back(phi[static_cast<std::size_t>(k)] * x.observation(k).transpose() / v - lu.inverse().transpose());
  }
  return out;
}

double iva_profiled_objective(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta) {
  w.check_compatible(x);
  check_beta(beta, w.n_sources());
  const Evaluation e = evaluate(w.matrices(), data_of(x), beta, false);
  if (!std::isfinite(e.value)) {
    throw Error("singular demixing matrix or degenerate source estimate");
  }
  return e.value;
}

std::vector<Matrix> iva_profiled_gradient(const DemixingEnsemble& w, const DatasetEnsemble& x,
                                          std::span<const double> beta) {
  w.check_compatible(x);
  check_beta(beta, w.n_sources());
  const Evaluation e = evaluate(w.matrices(), data_of(x), beta, true);
  if (!std::isfinite(e.value)) {
    throw Error("singular demixing matrix or degenerate source estimate");
  }
  // dF/dW = H W^-T.
  std::vector<Matrix> out;
  for (Index k = 0; k < w.k_datasets(); ++k) {
    out.push_back(e.relative_gradient[static_cast<std::size_t>(k)] * w[k].inverse().transpose());
  }
  return out;
}

Vector iva_source_costs(const DemixingEnsemble& w, const DatasetEnsemble& x, std::span<const double> beta) {
  w.check_compatible(x);
  const Index n = w.n_sources();
  check_beta(beta, n);
  std::vector<Matrix> y;
  for (Index k = 0; k < w.k_datasets(); ++k) y.push_back(w[k] * x.observation(k));
  Vector out(n);
  for (Index s = 0; s < n; ++s) out(s) = profiled_term(gather(y, s), beta[static_cast<std::size_t>(s)], false).cost;
  return out;
}

FitResult refine_iva_mpe(const DatasetEnsemble& x, const DemixingEnsemble& w0, std::span<const double> beta,
                         const FitOptions& opts) {
  opts.validate();
  w0.check_compatible(x);
  check_beta(beta, w0.n_sources());
  RunState st = run_lbfgs(w0.matrices(), data_of(x), beta, opts, 0.0);
  FitResult out;
  out.demixing = DemixingEnsemble(st.u);
  out.objective_trace = std::move(st.trace);
  out.selected_beta.assign(beta.begin(), beta.end());
  out.converged = st.converged && !st.singular;
  out.iterations = st.iterations;
  return out;
}

FitResult fit_iva_mpe(const DatasetEnsemble& x, const FitOptions& opts, RngHandle& rng) {
  opts.validate();
  const Index n = x.n_sources();
  const Index kd = x.k_datasets();
  if (x.v_samples() <= n) {
    throw Error("V must exceed N");
  }
  std::vector<Matrix> q, z;
  double offset = 0.0;
  for (Index k = 0; k < kd; ++k) {
    q.push_back(opts.whitening ? whitening_matrix(x.observation(k)) : Matrix::Identity(n, n));
    z.push_back(q.back() * x.observation(k));
    offset -= std::log(std::abs(q.back().determinant()));
  }

  std::vector<std::vector<double>> branches;
  if (opts.source_betas) {
    check_beta(*opts.source_betas, n);
    branches.push_back(*opts.source_betas);
  } else {
    for (double b : opts.beta_candidates) branches.emplace_back(static_cast<std::size_t>(n), b);
  }
  const bool selecting = !opts.source_betas && opts.beta_candidates.size() > 1;

  // One descent from `start`: every branch, then the refined selection.
  struct Attempt {
    RunState run;
    std::vector<double> beta;
    Index iterations = 0;
  };
  auto descend = [&](const std::vector<Matrix>& start) {
    Attempt a;
    std::vector<RunState> runs;
    for (const std::vector<double>& beta : branches) {
      runs.push_back(run_lbfgs(start, z, beta, opts, offset));
      a.iterations += runs.back().iterations;
      if (runs.back().singular) {
        a.run = std::move(runs.back());
        return a;
      }
    }
    std::size_t best = 0;
    a.beta = branches.front();
    if (selecting) {
      double best_total = kInf;
      for (std::size_t b = 0; b < runs.size(); ++b) {
        std::vector<Matrix> y;
        for (Index k = 0; k < kd; ++k) y.push_back(runs[b].u[static_cast<std::size_t>(k)] * z[static_cast<std::size_t>(k)]);
        double total = 0.0;
        std::vector<double> pick(static_cast<std::size_t>(n));
        for (Index s = 0; s < n; ++s) {
          const RowMatrix ys = gather(y, s);
          double low = kInf;
          for (double cand : opts.beta_candidates) {
            const double c = profiled_term(ys, cand, false).cost;
            if (c < low) {
              low = c;
              pick[static_cast<std::size_t>(s)] = cand;
            }
          }
          total += low;
        }
        if (total < best_total) {
          best_total = total;
          best = b;
          a.beta = pick;
        }
      }
      a.run = run_lbfgs(runs[best].u, z, a.beta, opts, offset);
      a.iterations += a.run.iterations;
    } else {
      a.run = std::move(runs[best]);
    }
    return a;
  };

  FitResult out;
  std::optional<Attempt> kept;
  Index restarts_left = opts.restarts - 1;
  Index total_iterations = 0;
  for (Index s = 0; s < opts.starts; ++s) {
    std::vector<Matrix> start = s == 0 ? equivariant_start(z) : random_orthogonal_start(n, kd, rng);
    Attempt a = descend(start);
    total_iterations += a.iterations;
    while (a.run.singular && restarts_left > 0) {
      --restarts_left;
      ++out.restarts_used;
      a = descend(random_orthogonal_start(n, kd, rng));
      total_iterations += a.iterations;
    }
    auto final_cost = [](const Attempt& t) { return t.run.trace.empty() ? kInf : t.run.trace.back(); };
    const bool better = !kept || (kept->run.singular && !a.run.singular) ||
                        (a.run.singular == kept->run.singular && final_cost(a) < final_cost(*kept));
    if (better) kept = std::move(a);
  }

  std::vector<Matrix> w;
  for (Index k = 0; k < kd; ++k) w.push_back(kept->run.u[static_cast<std::size_t>(k)] * q[static_cast<std::size_t>(k)]);
  out.demixing = normalize_rows(std::move(w), x);
  out.objective_trace = std::move(kept->run.trace);
  out.selected_beta = kept->beta.empty() ? branches.front() : kept->beta;
  out.converged = kept->run.converged && !kept->run.singular;
  out.iterations = total_iterations;
  return out;
}

}  // namespace jbss
