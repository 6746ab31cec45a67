#pragma once

// Separation quality: global matrices G^[k] = W^[k] A^[k], interference-to-
// source ratios, trial success and permutation alignment.

#include "jbss/core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace jbss {

std::vector<Matrix> global_matrices(const DemixingEnsemble& w, std::span<const Matrix> a);

struct IsrResult {
  /// ISR_{m,n} = sum_k ISR^[k]_{m,n}; zero diagonal.
  Matrix pairwise;
  /// per_dataset[k](m, n) = g_{m,n}^2 E|s_n^[k]|^2 / E|s_m^[k]|^2.
  std::vector<Matrix> per_dataset;
  /// sum_{m != n} V ISR_{m,n}.
  double total_normalized = 0.0;
};

/// `energy` is N x K with energy(n, k) = E|s_n^[k]|^2. G is expected to be
/// aligned with a unit diagonal; realized g^2 stands in for the expectation.
IsrResult isr_from_g(std::span<const Matrix> g, const Matrix& energy, Index v_samples);

struct SuccessResult {
  bool success = false;
  /// perm[m] = column of the largest |g| in row m, shared by every dataset.
  std::optional<std::vector<Index>> permutation;
};

SuccessResult trial_success(std::span<const Matrix> g);

enum class AlignMethod { Greedy, Exhaustive };

/// Assignment maximizing sum_n score(n, perm[n]).
std::vector<Index> best_assignment(const Matrix& score, AlignMethod method);

/// Row-normalized |G| summed over datasets; the alignment score.
Matrix alignment_score(std::span<const Matrix> g);

/// Reorders the rows of every W^[k] so that G^[k] is diagonal-dominant under
/// one shared permutation, then scales each row to a unit diagonal of G^[k].
/// Rows whose diagonal entry vanishes are left unscaled.
DemixingEnsemble align(const DemixingEnsemble& w, std::span<const Matrix> a, AlignMethod method = AlignMethod::Greedy);

struct TrialOutcome {
  std::vector<Matrix> g_ensemble;
  Matrix isr_pairwise;
  double isr_total_normalized = 0.0;
  bool success = false;
  std::vector<Index> permutation;
};

/// Success on the raw G, then alignment and ISR on the aligned G.
TrialOutcome evaluate_trial(const DemixingEnsemble& w, std::span<const Matrix> a, const Matrix& energy,
                            Index v_samples, AlignMethod method = AlignMethod::Greedy);

double mean_of(std::span<const double> xs);
/// Median with the midpoint rule for even counts; infinite values sort last.
double median_of(std::span<const double> xs);

}  // namespace jbss
