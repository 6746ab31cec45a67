#pragma once

// Test-only reference computations. Nothing here calls into the library's
// numerical paths; each routine is a deliberately plain re-derivation used to
// check the implementation.

#include "jbss/core.hpp"
#include "jbss/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

using jbss::Index;
using jbss::Matrix;
using jbss::Vector;

/// E[r^p] for the MPE radial law p(r) ∝ r^(K-1) exp(-r^(2 beta) / 2) in
/// closed form: t = r^(2 beta) / 2 ~ Gamma(K / (2 beta)).
inline double mpe_radial_moment_closed(Index k, double beta, double p) {
  const double a = static_cast<double>(k) / (2.0 * beta);
  return std::exp(p / (2.0 * beta) * std::log(2.0) + std::lgamma(a + p / (2.0 * beta)) - std::lgamma(a));
}

/// Same moment by composite Simpson on a uniform r grid (no substitution).
inline double mpe_radial_moment_simpson(Index k, double beta, double p, int intervals = 200000) {
  // The density is negligible once r^(2 beta) / 2 > 200.
  const double r_max = std::pow(400.0, 1.0 / (2.0 * beta));
  const double h = r_max / intervals;
  auto dens = [&](double r, double power) {
    if (r == 0.0) return 0.0;
    return std::pow(r, static_cast<double>(k) - 1.0 + power) * std::exp(-0.5 * std::pow(r, 2.0 * beta));
  };
  auto simpson = [&](double power) {
    double s = dens(0.0, power) + dens(r_max, power);
    for (int i = 1; i < intervals; ++i) {
      s += (i % 2 == 1 ? 4.0 : 2.0) * dens(i * h, power);
    }
    return s * h / 3.0;
  };
  return simpson(p) / simpson(0.0);
}

/// kappa for the K-variate MPE from the closed-form radial moments:
/// kappa = beta^2 E[r^(4 beta - 2)] E[r^2] / K^2.
inline double mpe_kappa_closed(Index k, double beta) {
  const double kd = static_cast<double>(k);
  return beta * beta * mpe_radial_moment_closed(k, beta, 4.0 * beta - 2.0) *
         mpe_radial_moment_closed(k, beta, 2.0) / (kd * kd);
}

/// Central-difference gradient of f at x.
inline Vector finite_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                                         double rel_step = 1e-6) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x(i)));
    Vector xp = x;
    Vector xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Index k, jbss::RngHandle& rng, double lo = 0.5, double hi = 2.0) {
  const Matrix g = rng.normal_matrix(k, k);
  const Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ();
  Vector eig(k);
  for (Index i = 0; i < k; ++i) {
    eig(i) = lo + (hi - lo) * rng.uniform();
  }
  Matrix s = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

/// Element-wise max |a - b| / max(|b|, floor).
inline double max_rel_diff(const Matrix& a, const Matrix& b, double floor = 1e-300) {
  double worst = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(std::abs(b(i, j)), floor));
    }
  }
  return worst;
}

inline double rel_frobenius(const Matrix& estimate, const Matrix& reference) {
  return (estimate - reference).norm() / reference.norm();
}

/// All permutations of 0..n-1 in lexicographic order.
inline std::vector<std::vector<Index>> all_permutations(Index n) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  std::vector<std::vector<Index>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace oracle
