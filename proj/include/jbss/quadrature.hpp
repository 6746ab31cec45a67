#pragma once

#include <functional>

namespace jbss {

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Globally adaptive 15-point Gauss-Kronrod integration of f over [a, b].
/// Bisects the interval with the largest error estimate until the total
/// estimate is below max(abs_tol, rel_tol * |value|) or the subdivision
/// budget is exhausted (converged = false).
QuadratureResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                    double abs_tol, double rel_tol, int max_subdivisions = 4000);

}  // namespace jbss
