#include "jbss/bounds.hpp"

#include "jbss/fim.hpp"
#include "jbss/score.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace jbss {

namespace {

PairBound unbounded(Index k, std::string why) {
  PairBound out;
  out.per_dataset = Vector::Constant(k, std::numeric_limits<double>::infinity());
  out.diagnosis = std::move(why);
  return out;
}

// Singularity test on the bracket B = A - C with C = K_{n,m}^-1.
bool bracket_singular(const Matrix& bracket, double scale) {
  const Eigen::JacobiSVD<Matrix> svd(bracket);
  const Vector& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  const double hi = s(0);
  if (!(lo > 0.0) || !std::isfinite(hi)) return true;
  return hi / lo > kBracketMaxCondition || lo <= kBracketRelTol * scale;
}

PairBound finish(const Matrix& inv_bracket, const Matrix& c_m, const Matrix& c_n, Index v_samples) {
  const Index k = inv_bracket.rows();
  PairBound out;
  out.per_dataset.resize(k);
  for (Index i = 0; i < k; ++i) {
    if (c_m(i, i) == 0.0) {
      throw Error("Hadamard division by zero");
    }
    out.per_dataset(i) = inv_bracket(i, i) * c_n(i, i) / c_m(i, i) / static_cast<double>(v_samples);
  }
  out.value = out.per_dataset.sum();
  out.finite = std::isfinite(out.value);
  return out;
}

void check_square(const Matrix& m, Index k, const char* what) {
  if (m.rows() != k || m.cols() != k) {
    throw Error(std::string(what) + " has the wrong shape");
  }
}

}  // namespace

std::string to_string(BoundRegime regime) {
  switch (regime) {
    case BoundRegime::General: return "general";
    case BoundRegime::Iid: return "iid";
    case BoundRegime::Elliptical: return "elliptical";
    case BoundRegime::IcaIid: return "ica-iid";
    case BoundRegime::IcaGauss: return "ica-gauss";
  }
  return "unknown";
}

PairBound isr_bound_general(const Matrix& k_mn, const Matrix& k_nm, const Matrix& c_m, const Matrix& c_n,
                            Index v_samples) {
  const Index k = k_mn.rows();
  check_square(k_mn, k, "K_mn");
  check_square(k_nm, k, "K_nm");
  check_square(c_m, k, "C_m");
  check_square(c_n, k, "C_n");
  if (v_samples < 1) {
    throw Error("V must be >= 1");
  }
  const Eigen::FullPivLU<Matrix> lu_nm(k_nm);
  if (!lu_nm.isInvertible()) {
    return unbounded(k, "K_nm is singular");
  }
  const Matrix k_nm_inv = lu_nm.inverse();
  const Matrix bracket = k_mn - k_nm_inv;
  const double scale = std::max(k_mn.norm(), k_nm_inv.norm());
  if (bracket_singular(bracket, scale)) {
    return unbounded(k, "near-nonidentifiable: K_mn - K_nm^-1 is singular");
  }
  return finish(bracket.inverse(), c_m, c_n, v_samples);
}

PairBound isr_bound_iid(const Matrix& gamma_m, const Matrix& gamma_n, const Matrix& r_m, const Matrix& r_n,
                        Index v_samples) {
  return isr_bound_general(gamma_m.cwiseProduct(r_n), gamma_n.cwiseProduct(r_m), r_m, r_n, v_samples);
}

PairBound isr_bound_elliptical(double kappa_m, double kappa_n, const Matrix& r_m, const Matrix& r_n,
                               Index v_samples) {
  const Index k = r_m.rows();
  check_square(r_m, k, "R_m");
  check_square(r_n, k, "R_n");
  require_spd(r_m, "R_m");
  require_spd(r_n, "R_n");
  if (!(kappa_m > 0.0) || !(kappa_n > 0.0)) {
    throw Error("kappa must be positive");
  }
  // Straight-line evaluation through Cholesky inverses and an LU solve.
  const Matrix a = kappa_m * spd_inverse(r_m).cwiseProduct(r_n);
  const Matrix b = kappa_n * spd_inverse(r_n).cwiseProduct(r_m);
  const Eigen::PartialPivLU<Matrix> lu_b(b);
  const Matrix b_inv = lu_b.inverse();
  const Matrix bracket = a - b_inv;
  const double scale = std::max(a.norm(), b_inv.norm());
  if (bracket_singular(bracket, scale)) {
    return unbounded(k, "Gaussian/proportional-covariance pair");
  }
  const Matrix inv = Eigen::PartialPivLU<Matrix>(bracket).solve(Matrix::Identity(k, k));
  return finish(inv, r_m, r_n, v_samples);
}

PairBound isr_bound_ica_iid(double kappa_m, double kappa_n, Index v_samples) {
  if (!(kappa_m > 0.0) || !(kappa_n > 0.0) || v_samples < 1) {
    throw Error("kappa must be positive and V >= 1");
  }
  const double det = kappa_m * kappa_n - 1.0;
  if (!(det > kBracketRelTol * std::max(kappa_m * kappa_n, 1.0))) {
    return unbounded(1, "two Gaussian sources");
  }
  PairBound out;
  out.value = kappa_n / det / static_cast<double>(v_samples);
  out.finite = true;
  out.per_dataset = Vector::Constant(1, out.value);
  return out;
}

PairBound isr_bound_ica_gauss(const Matrix& r_m, const Matrix& r_n, Index v_samples) {
  check_square(r_m, v_samples, "R_m");
  check_square(r_n, v_samples, "R_n");
  const Eigen::LLT<Matrix> llt_m(r_m);
  const Eigen::LLT<Matrix> llt_n(r_n);
  if (llt_m.info() != Eigen::Success || llt_n.info() != Eigen::Success) {
    throw Error("sample covariances must be positive definite");
  }
  const double v = static_cast<double>(v_samples);
  const double k_mn = llt_m.solve(r_n).trace() / v;
  const double k_nm = llt_n.solve(r_m).trace() / v;
  const Matrix km = Matrix::Constant(1, 1, k_mn);
  const Matrix kn = Matrix::Constant(1, 1, k_nm);
  const Matrix cm = Matrix::Constant(1, 1, r_m.trace() / v);
  const Matrix cn = Matrix::Constant(1, 1, r_n.trace() / v);
  PairBound out = isr_bound_general(km, kn, cm, cn, v_samples);
  if (!out.finite) out.diagnosis = "proportional sample covariances";
  return out;
}

bool BoundReport::all_finite() const {
  for (Index a = 0; a < finite.rows(); ++a) {
    for (Index b = 0; b < finite.cols(); ++b) {
      if (a != b && !finite(a, b)) return false;
    }
  }
  return true;
}

std::string BoundReport::to_csv() const {
  std::ostringstream os;
  os << "m,n,k,bound,finite,regime\n";
  const Index n = pairwise.rows();
  const std::string tag = to_string(regime);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      if (a == b) continue;
      for (std::size_t k = 0; k < per_dataset.size(); ++k) {
        os << a << ',' << b << ',' << k << ',' << format_double(per_dataset[k](a, b)) << ','
           << (finite(a, b) ? "true" : "false") << ',' << tag << '\n';
      }
      os << a << ',' << b << ",total," << format_double(pairwise(a, b)) << ','
         << (finite(a, b) ? "true" : "false") << ',' << tag << '\n';
    }
  }
  return os.str();
}

BoundReport bound_report(const std::vector<SourceModel>& models, Index v_samples) {
  if (models.size() < 2) {
    throw Error("bounds need at least two sources");
  }
  const Index n = static_cast<Index>(models.size());
  const Index k = models.front().k_datasets();
  const bool iid = std::all_of(models.begin(), models.end(), [](const SourceModel& m) { return m.is_iid(); });
  BoundReport out;
  out.v_samples = v_samples;
  out.regime = iid ? (k == 1 ? BoundRegime::IcaIid : BoundRegime::Elliptical)
                   : (k == 1 ? BoundRegime::IcaGauss : BoundRegime::General);
  out.pairwise = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  out.finite.setConstant(n, n, false);
  out.per_dataset.assign(static_cast<std::size_t>(k), Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN()));

  const KMatrixSet km = k_matrices_for_models(models, v_samples);
  std::vector<Matrix> energy;
  for (const SourceModel& m : models) energy.push_back(marginal_covariance(m));

  double total = 0.0;
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      if (a == b) continue;
      const PairBound pb = isr_bound_general(km.at(a, b), km.at(b, a), energy[static_cast<std::size_t>(a)],
                                             energy[static_cast<std::size_t>(b)], v_samples);
      out.pairwise(a, b) = pb.value;
      out.finite(a, b) = pb.finite;
      for (Index kk = 0; kk < k; ++kk) out.per_dataset[static_cast<std::size_t>(kk)](a, b) = pb.per_dataset(kk);
      if (!pb.finite) {
        out.diagnoses.push_back("pair (" + std::to_string(a) + ", " + std::to_string(b) + "): " + pb.diagnosis);
      }
      total += static_cast<double>(v_samples) * pb.value;
    }
  }
  out.total_normalized = total;
  return out;
}

MonotonicityReport check_bound_monotonicity(const Matrix& r_m, const Matrix& r_n,
                                            std::span<const double> kappa_grid, Index v_samples) {
  constexpr double kSlack = 1e-10;
  MonotonicityReport out;
  std::vector<double> grid(kappa_grid.begin(), kappa_grid.end());
  std::sort(grid.begin(), grid.end());
  const PairBound gauss = isr_bound_elliptical(1.0, 1.0, r_m, r_n, v_samples);
  auto describe = [](const char* what, double km, double kn) {
    std::ostringstream os;
    os << what << " at kappa_m=" << km << ", kappa_n=" << kn;
    return os.str();
  };
  for (const double kn : grid) {
    double prev = std::numeric_limits<double>::infinity();
    for (const double km : grid) {
      const PairBound b = isr_bound_elliptical(km, kn, r_m, r_n, v_samples);
      ++out.checks;
      if (gauss.finite && !(b.finite && b.value <= gauss.value * (1.0 + kSlack))) {
        out.violations.push_back(describe("elliptical bound exceeds Gaussian bound", km, kn));
      }
      ++out.checks;
      if (b.finite && std::isfinite(prev) && b.value > prev * (1.0 + kSlack)) {
        out.violations.push_back(describe("bound increases with kappa_m", km, kn));
      }
      if (!b.finite && std::isfinite(prev)) {
        out.violations.push_back(describe("bound becomes unbounded as kappa_m grows", km, kn));
      }
      prev = b.value;
    }
  }
  return out;
}

}  // namespace jbss
