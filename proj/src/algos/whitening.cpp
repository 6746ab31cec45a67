#include "jbss/algos.hpp"

namespace jbss {

Matrix whitening_matrix(const Matrix& x) {
  if (x.cols() < 1) {
    throw Error("no samples to whiten");
  }
  const Matrix cov = x * x.transpose() / static_cast<double>(x.cols());
  if (!is_spd(cov)) {
    throw Error("sample covariance is singular; cannot whiten");
  }
  return spd_inv_sqrt(cov);
}

}  // namespace jbss
