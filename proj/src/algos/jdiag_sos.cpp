#include "jbss/algos.hpp"

#include <cmath>
#include <numbers>

namespace jbss {

namespace {

constexpr double kRelativeDecrease = 1e-10;

struct RotTerm {
  Matrix a;
  bool two_sided;
};

// Squared diagonal mass at (i, i) and (j, j) after rotating rows i, j
// (and columns for two-sided terms) by theta.
double diag_mass(const std::vector<RotTerm>& terms, Index i, Index j, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  double g = 0.0;
  for (const RotTerm& t : terms) {
    const Matrix& a = t.a;
    double aii, ajj;
    if (t.two_sided) {
      const double cross = a(i, j) + a(j, i);
      aii = c * c * a(i, i) - c * s * cross + s * s * a(j, j);
      ajj = s * s * a(i, i) + c * s * cross + c * c * a(j, j);
    } else {
      aii = c * a(i, i) - s * a(j, i);
      ajj = s * a(i, j) + c * a(j, j);
    }
    g += aii * aii + ajj * ajj;
  }
  return g;
}

// g(theta) is a degree-2 trigonometric polynomial in phi = 2 theta; recover
// it from five samples and maximize.
double best_angle(const std::vector<RotTerm>& terms, Index i, Index j) {
  constexpr int kSamples = 5;
  double a0 = 0.0, a1 = 0.0, b1 = 0.0, a2 = 0.0, b2 = 0.0;
  for (int m = 0; m < kSamples; ++m) {
    const double phi = 2.0 * std::numbers::pi * m / kSamples;
    const double g = diag_mass(terms, i, j, 0.5 * phi);
    a0 += g / kSamples;
    a1 += 2.0 * g * std::cos(phi) / kSamples;
    b1 += 2.0 * g * std::sin(phi) / kSamples;
    a2 += 2.0 * g * std::cos(2.0 * phi) / kSamples;
    b2 += 2.0 * g * std::sin(2.0 * phi) / kSamples;
  }
  auto h = [&](double p) { return a1 * std::cos(p) + b1 * std::sin(p) + a2 * std::cos(2 * p) + b2 * std::sin(2 * p); };
  auto dh = [&](double p) { return -a1 * std::sin(p) + b1 * std::cos(p) - 2 * a2 * std::sin(2 * p) + 2 * b2 * std::cos(2 * p); };
  auto d2h = [&](double p) { return -a1 * std::cos(p) - b1 * std::sin(p) - 4 * a2 * std::cos(2 * p) - 4 * b2 * std::sin(2 * p); };
  constexpr int kGrid = 72;
  double best_phi = 0.0, best_val = h(0.0);
  for (int m = 1; m < kGrid; ++m) {
    const double p = -std::numbers::pi + 2.0 * std::numbers::pi * m / kGrid;
    const double val = h(p);
    if (val > best_val) {
      best_val = val;
      best_phi = p;
    }
  }
  for (int it = 0; it < 20; ++it) {
    const double curv = d2h(best_phi);
    if (!(curv < 0.0)) break;
    const double next = best_phi - dh(best_phi) / curv;
    if (h(next) < best_val) break;
    const bool done = std::abs(next - best_phi) < 1e-15;
    best_phi = next;
    best_val = h(next);
    if (done) break;
  }
  if (best_val <= h(0.0) + 1e-14 * std::abs(a0)) return 0.0;
  return 0.5 * best_phi;
}

void rotate_rows(Matrix& a, Index i, Index j, double c, double s) {
  const Eigen::RowVectorXd ri = a.row(i), rj = a.row(j);
  a.row(i) = c * ri - s * rj;
  a.row(j) = s * ri + c * rj;
}

void rotate_cols(Matrix& a, Index i, Index j, double c, double s) {
  const Vector ci = a.col(i), cj = a.col(j);
  a.col(i) = c * ci - s * cj;
  a.col(j) = s * ci + c * cj;
}

}  // namespace

std::vector<std::vector<Matrix>> lagged_cross_covariances(std::span<const Matrix> z, Index n_lags) {
  const Index kd = static_cast<Index>(z.size());
  const Index v = z.front().cols();
  if (n_lags < 1 || n_lags >= v) {
    throw Error("lag count must be in [1, V)");
  }
  std::vector<std::vector<Matrix>> out(static_cast<std::size_t>(n_lags));
  for (Index l = 0; l < n_lags; ++l) {
    const double count = static_cast<double>(v - l);
    for (Index k1 = 0; k1 < kd; ++k1) {
      for (Index k2 = 0; k2 < kd; ++k2) {
        const Matrix& a = z[static_cast<std::size_t>(k1)];
        const Matrix& b = z[static_cast<std::size_t>(k2)];
        const Matrix fwd = a.rightCols(v - l) * b.leftCols(v - l).transpose();
        const Matrix bwd = a.leftCols(v - l) * b.rightCols(v - l).transpose();
        out[static_cast<std::size_t>(l)].push_back(0.5 * (fwd + bwd) / count);
      }
    }
  }
  return out;
}

double jdiag_off_energy(std::span<const Matrix> rotations, const std::vector<std::vector<Matrix>>& c) {
  const Index kd = static_cast<Index>(rotations.size());
  double total = 0.0;
  for (std::size_t l = 0; l < c.size(); ++l) {
    for (Index k1 = 0; k1 < kd; ++k1) {
      for (Index k2 = 0; k2 < kd; ++k2) {
        if (l == 0 && k1 == k2) continue;
        const Matrix m = rotations[static_cast<std::size_t>(k1)] * c[l][static_cast<std::size_t>(k1 * kd + k2)] *
                         rotations[static_cast<std::size_t>(k2)].transpose();
        total += m.squaredNorm() - m.diagonal().squaredNorm();
      }
    }
  }
  return total;
}

FitResult fit_jdiag_sos(const DatasetEnsemble& x, Index n_lags, const FitOptions& opts) {
  opts.validate();
  const Index n = x.n_sources();
  const Index kd = x.k_datasets();
  if (n_lags < 1) {
    throw Error("JDIAG-SOS needs at least one lag");
  }
  if (x.v_samples() <= n_lags * n) {
    throw Error("V must exceed L N");
  }
  std::vector<Matrix> q, z;
  for (Index k = 0; k < kd; ++k) {
    q.push_back(whitening_matrix(x.observation(k)));
    z.push_back(q.back() * x.observation(k));
  }
  const std::vector<std::vector<Matrix>> c = lagged_cross_covariances(z, n_lags);
  std::vector<Matrix> u(static_cast<std::size_t>(kd), Matrix::Identity(n, n));

  FitResult out;
  double energy = jdiag_off_energy(u, c);
  out.objective_trace.push_back(energy);
  for (Index sweep = 0; sweep < opts.max_iterations; ++sweep) {
    for (Index k = 0; k < kd; ++k) {
      // Every term in which U^[k] appears, oriented so U^[k] acts on rows.
      std::vector<RotTerm> terms;
      for (std::size_t l = 0; l < c.size(); ++l) {
        for (Index o = 0; o < kd; ++o) {
          const Matrix& uk = u[static_cast<std::size_t>(k)];
          const Matrix& uo = u[static_cast<std::size_t>(o)];
          if (o == k) {
            if (l > 0) terms.push_back({uk * c[l][static_cast<std::size_t>(k * kd + k)] * uk.transpose(), true});
            continue;
          }
          terms.push_back({uk * c[l][static_cast<std::size_t>(k * kd + o)] * uo.transpose(), false});
          terms.push_back({(uo * c[l][static_cast<std::size_t>(o * kd + k)] * uk.transpose()).transpose(), false});
        }
      }
      for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
          const double theta = best_angle(terms, i, j);
          if (theta == 0.0) continue;
          const double cs = std::cos(theta), sn = std::sin(theta);
          rotate_rows(u[static_cast<std::size_t>(k)], i, j, cs, sn);
          for (RotTerm& t : terms) {
            rotate_rows(t.a, i, j, cs, sn);
            if (t.two_sided) rotate_cols(t.a, i, j, cs, sn);
          }
        }
      }
    }
    const double next = jdiag_off_energy(u, c);
    out.objective_trace.push_back(next);
    ++out.iterations;
    const double decrease = energy - next;
    energy = next;
    if (decrease <= kRelativeDecrease * std::max(energy, 1e-300)) {
      out.converged = true;
      break;
    }
  }

  std::vector<Matrix> w;
  for (Index k = 0; k < kd; ++k) {
    Matrix& uk = u[static_cast<std::size_t>(k)];
    Matrix wk = uk * q[static_cast<std::size_t>(k)];
    for (Index r = 0; r < n; ++r) {
      Index first = 0;
      while (first < n && wk(r, first) == 0.0) ++first;
      if (first < n && wk(r, first) < 0.0) {
        wk.row(r) *= -1.0;
        uk.row(r) *= -1.0;
      }
    }
    w.push_back(std::move(wk));
  }
  out.demixing = DemixingEnsemble(std::move(w));
  out.rotations = std::move(u);
  out.selected_beta.assign(static_cast<std::size_t>(n), 1.0);
  return out;
}

}  // namespace jbss
