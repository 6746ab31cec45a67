#include "jbss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace jbss {

std::vector<Matrix> global_matrices(const DemixingEnsemble& w, std::span<const Matrix> a) {
  if (static_cast<Index>(a.size()) != w.k_datasets()) {
    throw Error("mixing and demixing ensembles differ in K");
  }
  std::vector<Matrix> g;
  g.reserve(a.size());
  for (Index k = 0; k < w.k_datasets(); ++k) {
    const Matrix& ak = a[static_cast<std::size_t>(k)];
    if (w[k].cols() != ak.rows()) {
      throw Error("shape mismatch between W and A");
    }
    g.push_back(w[k] * ak);
  }
  return g;
}

IsrResult isr_from_g(std::span<const Matrix> g, const Matrix& energy, Index v_samples) {
  if (g.empty()) {
    throw Error("empty global matrix ensemble");
  }
  const Index n = g.front().rows();
  const Index k = static_cast<Index>(g.size());
  if (energy.rows() != n || energy.cols() != k) {
    throw Error("energy must be N x K");
  }
  if ((energy.array() <= 0.0).any()) {
    throw Error("zero second moment");
  }
  IsrResult out;
  out.pairwise = Matrix::Zero(n, n);
  for (Index kk = 0; kk < k; ++kk) {
    const Matrix& gk = g[static_cast<std::size_t>(kk)];
    Matrix isr = Matrix::Zero(n, n);
    for (Index m = 0; m < n; ++m) {
      for (Index c = 0; c < n; ++c) {
        if (m != c) isr(m, c) = gk(m, c) * gk(m, c) * energy(c, kk) / energy(m, kk);
      }
    }
    out.pairwise += isr;
    out.per_dataset.push_back(std::move(isr));
  }
  out.total_normalized = static_cast<double>(v_samples) * out.pairwise.sum();
  return out;
}

SuccessResult trial_success(std::span<const Matrix> g) {
  SuccessResult out;
  if (g.empty()) return out;
  const Index n = g.front().rows();
  std::vector<Index> shared;
  for (const Matrix& gk : g) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (Index m = 0; m < n; ++m) {
      Index col = 0;
      gk.row(m).cwiseAbs().maxCoeff(&col);
      if (used[static_cast<std::size_t>(col)]) return out;
      used[static_cast<std::size_t>(col)] = true;
      perm[static_cast<std::size_t>(m)] = col;
    }
    if (shared.empty()) {
      shared = perm;
    } else if (perm != shared) {
      return out;
    }
  }
  out.success = true;
  out.permutation = shared;
  return out;
}

Matrix alignment_score(std::span<const Matrix> g) {
  Matrix s = Matrix::Zero(g.front().rows(), g.front().cols());
  for (const Matrix& gk : g) {
    for (Index m = 0; m < gk.rows(); ++m) {
      const double norm = gk.row(m).norm();
      if (norm > 0.0) s.row(m) += gk.row(m).cwiseAbs() / norm;
    }
  }
  return s;
}

std::vector<Index> best_assignment(const Matrix& score, AlignMethod method) {
  const Index n = score.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  if (method == AlignMethod::Exhaustive) {
    if (n > 8) {
      throw Error("exhaustive assignment is limited to N <= 8");
    }
    std::vector<Index> cand(static_cast<std::size_t>(n));
    std::iota(cand.begin(), cand.end(), Index{0});
    double best = -1.0;
    do {
      double total = 0.0;
      for (Index m = 0; m < n; ++m) total += score(m, cand[static_cast<std::size_t>(m)]);
      if (total > best) {
        best = total;
        perm = cand;
      }
    } while (std::next_permutation(cand.begin(), cand.end()));
    return perm;
  }
  std::vector<bool> row_used(static_cast<std::size_t>(n), false), col_used(static_cast<std::size_t>(n), false);
  for (Index step = 0; step < n; ++step) {
    Index br = -1, bc = -1;
    double best = -1.0;
    for (Index r = 0; r < n; ++r) {
      if (row_used[static_cast<std::size_t>(r)]) continue;
      for (Index c = 0; c < n; ++c) {
        if (!col_used[static_cast<std::size_t>(c)] && score(r, c) > best) {
          best = score(r, c);
          br = r;
          bc = c;
        }
      }
    }
    row_used[static_cast<std::size_t>(br)] = true;
    col_used[static_cast<std::size_t>(bc)] = true;
    perm[static_cast<std::size_t>(br)] = bc;
  }
  return perm;
}

DemixingEnsemble align(const DemixingEnsemble& w, std::span<const Matrix> a, AlignMethod method) {
  const std::vector<Matrix> g = global_matrices(w, a);
  const std::vector<Index> perm = best_assignment(alignment_score(g), method);
  std::vector<Matrix> out;
  for (Index k = 0; k < w.k_datasets(); ++k) {
    Matrix wk(w[k].rows(), w[k].cols());
    const Matrix& gk = g[static_cast<std::size_t>(k)];
    for (Index m = 0; m < w[k].rows(); ++m) {
      const Index target = perm[static_cast<std::size_t>(m)];
      const double diag = gk(m, target);
      wk.row(target) = diag != 0.0 ? Vector(w[k].row(m) / diag) : Vector(w[k].row(m));
    }
    out.push_back(std::move(wk));
  }
  return DemixingEnsemble(std::move(out));
}

TrialOutcome evaluate_trial(const DemixingEnsemble& w, std::span<const Matrix> a, const Matrix& energy,
                            Index v_samples, AlignMethod method) {
  TrialOutcome out;
  const std::vector<Matrix> raw = global_matrices(w, a);
  const SuccessResult s = trial_success(raw);
  out.success = s.success;
  const DemixingEnsemble aligned = align(w, a, method);
  out.g_ensemble = global_matrices(aligned, a);
  out.permutation = s.success ? *s.permutation : best_assignment(alignment_score(raw), method);
  const IsrResult isr = isr_from_g(out.g_ensemble, energy, v_samples);
  out.isr_pairwise = isr.pairwise;
  out.isr_total_normalized = isr.total_normalized;
  return out;
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double median_of(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace jbss
