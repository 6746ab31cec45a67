#pragma once

// Identifiability auditing on model descriptions. A pair of sources is not
// identifiable when both have a Gaussian component on the same dataset subset
// alpha (jointly Gaussian and independent of the remaining datasets) and the
// two component covariances are diagonally similar, R_m = D R_n D, at every
// sample lag.

#include "jbss/core.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jbss {

/// Returns the diagonal of D with R_m = D R_n D (entry-wise within
/// tol * max|R_m|), or nothing. The first entry of each connected block of
/// R_n is taken positive.
std::optional<Vector> diag_similar(const Matrix& r_m, const Matrix& r_n, double tol = 1e-8);

/// One D for a list of block pairs: blocks_m[i] = D blocks_n[i] D for every i.
/// The first pair must be the symmetric lag-0 covariances; later pairs may be
/// non-symmetric lagged blocks.
std::optional<Vector> diag_similar_blocks(std::span<const Matrix> blocks_m, std::span<const Matrix> blocks_n,
                                          double tol = 1e-8);

struct IdentViolation {
  Index m = 0;
  Index n = 0;
  /// Dataset subset, 0-based and sorted.
  std::vector<Index> alpha;
  /// Diagonal of the witness D on alpha.
  Vector d;
  std::string regime;
};

struct PermutationViolation {
  Index m = 0;
  Index n = 0;
  /// Nonempty proper subset on which both sources split off.
  std::vector<Index> alpha;
};

struct IdentVerdict {
  bool identifiable = true;
  std::vector<IdentViolation> violations;
  bool common_permutation = true;
  std::vector<PermutationViolation> permutation_violations;

  /// True when some violation names the unordered pair (m, n).
  bool pair_flagged(Index m, Index n) const;
  std::string to_json() const;
};

/// i.i.d. models only. Candidate subsets are the unions of connected blocks
/// of the joint covariance graph; similarity is tested per block. At most one
/// violation per pair is reported, on the largest violating subset. Also
/// fills the common-permutation fields.
IdentVerdict check_iva_identifiability_iid(const std::vector<SourceModel>& models);

/// Sample-dependent models: the similarity must hold with one common D for
/// every lag block. Models with a dense sample covariance are limited to
/// K V <= 4096.
IdentVerdict check_iva_identifiability_general(const std::vector<SourceModel>& models, Index v_samples);

struct CommonPermutationResult {
  bool common = true;
  std::vector<PermutationViolation> violations;
};

/// Searches each pair for a nonempty proper alpha on which both sources are
/// alpha-independent. Witnesses are the connected blocks of the joint graph.
CommonPermutationResult check_common_permutation(const std::vector<SourceModel>& models);

struct FimSingularityReport {
  /// Relative minimum eigenvalue of F_{m,n} (upper triangle used).
  Matrix relative_min_eigenvalue;
  /// numeric_singular(m, n) and symbolic_flagged(m, n) for m < n.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> numeric_singular;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> symbolic_flagged;
  bool agrees = true;
};

/// Builds F_{m,n} through the FIM module and compares its singularity
/// (relative eigenvalue below 1e-9) with the symbolic verdict.
FimSingularityReport verify_fim_singularity(const std::vector<SourceModel>& models, Index v_samples);

}  // namespace jbss
