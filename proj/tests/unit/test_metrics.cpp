#include "jbss/metrics.hpp"
#include "jbss/rng.hpp"
#include "jbss/sources.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace jbss;

namespace {

Matrix permutation_matrix(const std::vector<Index>& perm) {
  const Index n = static_cast<Index>(perm.size());
  Matrix p = Matrix::Zero(n, n);
  for (Index m = 0; m < n; ++m) p(m, perm[m]) = 1.0;
  return p;
}

std::vector<Matrix> random_mixing(Index n, Index k, RngHandle& rng) {
  std::vector<Matrix> a;
  for (Index i = 0; i < k; ++i) a.push_back(rng.normal_matrix(n, n) + 3.0 * Matrix::Identity(n, n));
  return a;
}

double assignment_value(const Matrix& s, const std::vector<Index>& perm) {
  double t = 0.0;
  for (Index m = 0; m < s.rows(); ++m) t += s(m, perm[m]);
  return t;
}

}  // namespace

TEST_CASE("global matrices") {
  RngHandle rng(600, 0);
  const std::vector<Matrix> a = random_mixing(3, 2, rng);
  std::vector<Matrix> inv, permuted;
  const Matrix p = permutation_matrix({2, 0, 1});
  for (const Matrix& ak : a) {
    inv.push_back(ak.inverse());
    permuted.push_back(p * ak.inverse());
  }
  for (const Matrix& g : global_matrices(DemixingEnsemble(inv), a)) CHECK((g - Matrix::Identity(3, 3)).norm() < 1e-12);
  for (const Matrix& g : global_matrices(DemixingEnsemble(permuted), a)) CHECK((g - p).norm() < 1e-12);
  const std::vector<Matrix> w{rng.normal_matrix(3, 3), rng.normal_matrix(3, 3)};
  const auto g = global_matrices(DemixingEnsemble(w), a);
  CHECK(g[1] == w[1] * a[1]);
  CHECK_THROWS_AS(global_matrices(DemixingEnsemble(w), std::span<const Matrix>(a.data(), 1)), Error);
}

TEST_CASE("ISR from G") {
  const std::vector<Matrix> eye(3, Matrix::Identity(2, 2));
  const IsrResult zero = isr_from_g(eye, Matrix::Ones(2, 3), 100);
  CHECK(zero.pairwise.norm() == 0.0);
  CHECK(zero.total_normalized == 0.0);

  Matrix g(2, 2);
  g << 1.0, 0.1, 0.0, 1.0;
  const std::vector<Matrix> one{g};
  const IsrResult r = isr_from_g(one, Matrix::Ones(2, 1), 50);
  CHECK(r.pairwise(0, 1) == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(r.pairwise(1, 0) == 0.0);
  CHECK(r.total_normalized == doctest::Approx(0.5).epsilon(1e-14));

  Matrix energy(2, 1);
  energy << 2.0, 8.0;
  CHECK(isr_from_g(one, energy, 1).pairwise(0, 1) == doctest::Approx(0.04).epsilon(1e-14));
  energy(0, 0) = 0.0;
  CHECK_THROWS_WITH_AS(isr_from_g(one, energy, 1), "zero second moment", Error);

  // Sign flips of G rows do not change the ISR.
  const std::vector<Matrix> flipped{-g};
  CHECK(isr_from_g(flipped, Matrix::Ones(2, 1), 50).total_normalized == r.total_normalized);
}

TEST_CASE("trial success") {
  const std::vector<Matrix> eye(2, Matrix::Identity(3, 3));
  const SuccessResult s = trial_success(eye);
  CHECK(s.success);
  CHECK(*s.permutation == std::vector<Index>{0, 1, 2});

  const std::vector<Matrix> mixed{permutation_matrix({1, 0, 2}), permutation_matrix({0, 1, 2})};
  CHECK_FALSE(trial_success(mixed).success);

  Matrix clash = Matrix::Identity(3, 3);
  clash(1, 0) = 2.0;
  const std::vector<Matrix> shared{clash};
  CHECK_FALSE(trial_success(shared).success);

  // Row scaling by nonzero constants does not change the verdict.
  RngHandle rng(601, 0);
  for (int t = 0; t < 50; ++t) {
    std::vector<Matrix> g;
    for (int k = 0; k < 3; ++k) g.push_back(permutation_matrix({2, 0, 1}) + 0.4 * rng.normal_matrix(3, 3));
    const bool base = trial_success(g).success;
    for (Matrix& gk : g) {
      for (Index m = 0; m < 3; ++m) gk.row(m) *= (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.1 + 5.0 * rng.uniform());
    }
    CHECK(trial_success(g).success == base);
  }
}

TEST_CASE("alignment removes the scale and permutation ambiguity") {
  RngHandle rng(602, 0);
  const Index n = 4, k = 3;
  const std::vector<Matrix> a = random_mixing(n, k, rng);
  const Matrix p = permutation_matrix({3, 1, 0, 2});
  std::vector<Matrix> w;
  for (const Matrix& ak : a) {
    const Vector lam = Vector::NullaryExpr(n, [&](Index) { return (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.2 + rng.uniform()); });
    w.push_back(lam.asDiagonal() * p * ak.inverse());
  }
  const DemixingEnsemble aligned = align(DemixingEnsemble(w), a);
  for (const Matrix& g : global_matrices(aligned, a)) CHECK((g - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);

  std::vector<Matrix> near;
  for (const Matrix& ak : a) near.push_back((Matrix::Identity(n, n) + 0.05 * rng.normal_matrix(n, n)) * ak.inverse());
  const Matrix score = alignment_score(global_matrices(DemixingEnsemble(near), a));
  CHECK(best_assignment(score, AlignMethod::Greedy) == std::vector<Index>{0, 1, 2, 3});
}

TEST_CASE("greedy assignment matches the exhaustive oracle on near-permutation G") {
  RngHandle rng(603, 0);
  int agree = 0, total = 0;
  for (int t = 0; t < 300; ++t) {
    const Index n = 2 + t % 3;
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Matrix> g;
    // Noise up to near-ties with the true entries.
    const double noise = 0.1 + 0.4 * rng.uniform();
    for (int k = 0; k < 3; ++k) g.push_back(permutation_matrix(perm) + noise * rng.normal_matrix(n, n));
    const Matrix s = alignment_score(g);
    const auto greedy = best_assignment(s, AlignMethod::Greedy);
    const auto exhaustive = best_assignment(s, AlignMethod::Exhaustive);
    ++total;
    if (std::abs(assignment_value(s, greedy) - assignment_value(s, exhaustive)) < 1e-12) ++agree;
    // Whenever some assignment passes the success test, alignment finds it.
    const SuccessResult sr = trial_success(g);
    if (sr.success) {
      CHECK(greedy == *sr.permutation);
    }
    for (const auto& cand : oracle::all_permutations(n)) {
      CHECK(assignment_value(s, exhaustive) >= assignment_value(s, cand) - 1e-12);
    }
  }
  CHECK(agree >= total * 95 / 100);

  // Adversarial matrix where greedy is not optimal.
  Matrix s(2, 2);
  s << 10.0, 9.0, 9.0, 0.0;
  CHECK(best_assignment(s, AlignMethod::Greedy) == std::vector<Index>{0, 1});
  CHECK(best_assignment(s, AlignMethod::Exhaustive) == std::vector<Index>{1, 0});
}

TEST_CASE("trial evaluation and aggregation") {
  RngHandle rng(604, 0);
  const Index n = 3, k = 2, v = 1000;
  const std::vector<Matrix> a = random_mixing(n, k, rng);
  std::vector<Matrix> w;
  for (const Matrix& ak : a) w.push_back(2.0 * permutation_matrix({1, 2, 0}) * (Matrix::Identity(n, n) + 0.01 * rng.normal_matrix(n, n)) * ak.inverse());
  const TrialOutcome o = evaluate_trial(DemixingEnsemble(w), a, Matrix::Ones(n, k), v);
  CHECK(o.success);
  CHECK(o.permutation == std::vector<Index>{1, 2, 0});
  CHECK(o.isr_total_normalized == doctest::Approx(v * o.isr_pairwise.sum()).epsilon(1e-14));
  for (const Matrix& g : o.g_ensemble) CHECK((g.diagonal() - Vector::Ones(n)).norm() < 1e-12);
  CHECK(o.isr_total_normalized > 0.0);
  CHECK(o.isr_total_normalized < v * 6 * 3e-3);

  const std::vector<double> xs{3.0, 1.0, std::numeric_limits<double>::infinity(), 2.0};
  CHECK(median_of(xs) == 2.5);
  CHECK(mean_of(std::span<const double>(xs.data(), 2)) == 2.0);
  const std::vector<double> odd{5.0, std::numeric_limits<double>::infinity(), 1.0};
  CHECK(median_of(odd) == 5.0);
}
