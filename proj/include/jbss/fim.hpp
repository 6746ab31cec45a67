#pragma once

// Fisher information for the demixing entries w^[k]_{m,n} at the true
// solution. The FIM is block diagonal after permutation: one K x K block F_n
// per source and one 2K x 2K block F_{m,n} per unordered pair.

#include "jbss/core.hpp"
#include "jbss/rng.hpp"

#include <vector>

namespace jbss {

/// K_{m,n}(k1, k2) = (1/V) E[(phi_m^[k1])^T s_n^[k1] (s_n^[k2])^T phi_m^[k2]].
struct KMatrix {
  Matrix values;
  Index m = 0;
  Index n = 0;
};

/// From per-dataset-pair V x V blocks: entry (k1, k2) = (1/V) tr(Gamma_m^[k2,k1] R_n^[k1,k2]).
/// `gamma_blocks[k2][k1]` and `r_blocks[k1][k2]` index datasets.
KMatrix k_matrix_from_stats(const std::vector<std::vector<Matrix>>& gamma_blocks,
                            const std::vector<std::vector<Matrix>>& r_blocks, Index v_samples, Index m = 0,
                            Index n = 1);

/// i.i.d. samples: K_{m,n} = Gamma_m o R_n.
KMatrix k_matrix_iid(const Matrix& gamma_m, const Matrix& r_n, Index m = 0, Index n = 1);

/// All K matrices of a model list at sample size V, including the m = n
/// entries (which carry the V-dependent all-ones term).
class KMatrixSet {
 public:
  KMatrixSet(Index n_sources, Index k_datasets, Index v_samples);

  Index n_sources() const { return n_; }
  Index k_datasets() const { return k_; }
  Index v_samples() const { return v_; }

  const Matrix& at(Index m, Index n) const;
  void set(Index m, Index n, Matrix values);
  bool has(Index m, Index n) const;

 private:
  Index n_;
  Index k_;
  Index v_;
  std::vector<Matrix> grid_;
};

/// Builds every K_{m,n} analytically. i.i.d. pairs use the Hadamard form;
/// sample-dependent Gaussian models go through their KV x KV covariances
/// (only the entries of Gamma_m on the sparsity pattern of R_n are formed).
KMatrixSet k_matrices_for_models(const std::vector<SourceModel>& models, Index v_samples);

/// K_{m,n} for one ordered pair of models.
Matrix model_k_matrix(const SourceModel& model_m, const SourceModel& model_n, Index v_samples);

struct FimBlocks {
  /// F_n, K x K, n = 0..N-1.
  std::vector<Matrix> diag_blocks;
  /// F_{m,n}, 2K x 2K, ordered (0,1), (0,2), ..., (N-2,N-1).
  std::vector<Matrix> pair_blocks;
  Index n_sources = 0;
  Index k_datasets = 0;
  Index v_samples = 0;

  const Matrix& pair(Index m, Index n) const;
  Matrix& pair(Index m, Index n);
  static std::size_t pair_index(Index m, Index n, Index n_sources);

  /// Full permuted FIM diag(F_1, ..., F_N, F_{1,2}, ..., F_{N-1,N}).
  Matrix permuted() const;
};

/// F_n = V (K_{n,n} - V 1) and F_{m,n} = V [[K_{m,n}, I], [I, K_{n,m}]].
FimBlocks assemble_fim(const KMatrixSet& k_matrices);

/// Smallest eigenvalue of a symmetric block divided by its largest |eigenvalue|.
double relative_min_eigenvalue(const Matrix& block);

/// A block is treated as singular when its relative minimum eigenvalue is below this.
inline constexpr double kFimSingularRatio = 1e-9;

struct EmpiricalFim {
  FimBlocks blocks;
  /// Largest |mean| / standard error over the stacked gradient entries.
  double max_mean_z = 0.0;
  Index realizations = 0;
};

/// Monte-Carlo FIM at W = A = I: draws `realizations` independent source sets
/// of V samples, evaluates the likelihood gradient
/// -(phi_m^[k])^T s_n^[k] + V delta_mn and returns the sample covariance in
/// FimBlocks layout. Throws "model mismatch" when the mean gradient is more
/// than 5 standard errors from zero.
EmpiricalFim empirical_fim(const std::vector<SourceModel>& models, Index v_samples, Index realizations,
                           RngHandle& rng);

/// Same, drawing from `models` but scoring with `score_models`.
EmpiricalFim empirical_fim(const std::vector<SourceModel>& models, const std::vector<SourceModel>& score_models,
                           Index v_samples, Index realizations, RngHandle& rng);

}  // namespace jbss
