#include "jbss/bounds.hpp"
#include "jbss/harness.hpp"
#include "jbss/ident.hpp"
#include "jbss/metrics.hpp"
#include "jbss/score.hpp"
#include "jbss/sources.hpp"

#include <cmath>
#include <functional>
#include <ostream>

namespace jbss {

namespace {

// E[r^p] under the MPE radial law via t = r^(2 beta) / 2 ~ Gamma(K / (2 beta)).
double radial_moment(Index k, double beta, double p) {
  const double a = static_cast<double>(k) / (2.0 * beta);
  return std::exp(p / (2.0 * beta) * std::log(2.0) + std::lgamma(a + p / (2.0 * beta)) - std::lgamma(a));
}

double kappa_closed(Index k, double beta) {
  const double kd = static_cast<double>(k);
  return beta * beta * radial_moment(k, beta, 4.0 * beta - 2.0) * radial_moment(k, beta, 2.0) / (kd * kd);
}

}  // namespace

int run_selftest(std::ostream& os) {
  int failures = 0;
  auto check = [&](const std::string& name, const std::function<bool()>& body) {
    bool ok = false;
    std::string why;
    try {
      ok = body();
    } catch (const std::exception& e) {
      why = std::string(" (") + e.what() + ")";
    }
    os << (ok ? "PASS " : "FAIL ") << name << why << "\n";
    if (!ok) ++failures;
  };

  check("kappa equals one for Gaussian SCVs", [] {
    for (Index k : {2, 3, 5}) {
      if (std::abs(kappa_elliptical(1.0, k, Matrix::Identity(k, k)).kappa - 1.0) > 1e-8) return false;
    }
    return true;
  });

  check("kappa quadrature matches the gamma-function moments", [] {
    for (Index k : {2, 5}) {
      for (double b : {0.5, 2.0, 3.0}) {
        const double q = kappa_elliptical(b, k, Matrix::Identity(k, k)).kappa;
        if (std::abs(q / kappa_closed(k, b) - 1.0) > 1e-8) return false;
      }
    }
    return true;
  });

  check("elliptical and i.i.d. bound paths agree", [] {
    RngHandle rng(91, 0);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix rm = random_correlation_matrix(3, rng), rn = random_correlation_matrix(3, rng);
      const double km = 1.0 + rng.uniform(), kn = 1.0 + rng.uniform();
      const PairBound a = isr_bound_elliptical(km, kn, rm, rn, 500);
      const PairBound b = isr_bound_iid(km * spd_inverse(rm), kn * spd_inverse(rn), rm, rn, 500);
      if (!a.finite || !b.finite || std::abs(a.value / b.value - 1.0) > 1e-10) return false;
    }
    return true;
  });

  check("Gaussian identity pair has an infinite bound", [] {
    const std::vector<SourceModel> models(2, SourceModel::gaussian(Matrix::Identity(3, 3)));
    return std::isinf(bound_report(models, 100).total_normalized);
  });

  check("symbolic identifiability agrees with FIM singularity", [] {
    RngHandle rng(92, 0);
    const Matrix r = random_correlation_matrix(3, rng);
    Vector d(3);
    d << 1.0, -2.0, 0.5;
    const Matrix similar = d.asDiagonal() * r * d.asDiagonal();
    const std::vector<SourceModel> bad{SourceModel::gaussian(r), SourceModel::gaussian(similar)};
    const std::vector<SourceModel> good{SourceModel::gaussian(r), SourceModel::gaussian(random_correlation_matrix(3, rng))};
    const IdentVerdict vb = check_iva_identifiability_iid(bad);
    const IdentVerdict vg = check_iva_identifiability_iid(good);
    return !vb.identifiable && vg.identifiable && verify_fim_singularity(bad, 1).agrees &&
           verify_fim_singularity(good, 1).agrees;
  });

  check("ISR arithmetic on a known global matrix", [] {
    Matrix g(2, 2);
    g << 1.0, 0.1, 0.0, 1.0;
    const std::vector<Matrix> gs{g};
    const IsrResult r = isr_from_g(gs, Matrix::Ones(2, 1), 1);
    return std::abs(r.pairwise(0, 1) - 0.01) < 1e-15 && r.pairwise(1, 0) == 0.0;
  });

  check("random streams are reproducible", [] {
    RngHandle a(93, 4), b(93, 4);
    return (a.normal_matrix(3, 3) - b.normal_matrix(3, 3)).norm() == 0.0 &&
           (a.split(7).normal_matrix(2, 2) - b.split(7).normal_matrix(2, 2)).norm() == 0.0;
  });

  return failures;
}

}  // namespace jbss
