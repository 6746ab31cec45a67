#include "jbss/fim.hpp"
#include "jbss/score.hpp"
#include "jbss/sources.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace jbss;

namespace {

std::vector<std::vector<Matrix>> grid_of(Index k, const Matrix& block) {
  return std::vector<std::vector<Matrix>>(static_cast<std::size_t>(k), std::vector<Matrix>(static_cast<std::size_t>(k), block));
}

double block_rel_error(const FimBlocks& est, const FimBlocks& ref) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.pair_blocks.size(); ++i) {
    worst = std::max(worst, oracle::rel_frobenius(est.pair_blocks[i], ref.pair_blocks[i]));
  }
  for (std::size_t i = 0; i < ref.diag_blocks.size(); ++i) {
    worst = std::max(worst, oracle::rel_frobenius(est.diag_blocks[i], ref.diag_blocks[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("K matrix from per-dataset statistics") {
  const Index v = 4, k = 3;
  const KMatrix ones = k_matrix_from_stats(grid_of(k, Matrix::Identity(v, v)), grid_of(k, Matrix::Identity(v, v)), v);
  CHECK((ones.values - Matrix::Ones(k, k)).norm() < 1e-15);

  const KMatrix scaled =
      k_matrix_from_stats(grid_of(k, 2.5 * Matrix::Identity(v, v)), grid_of(k, 0.3 * Matrix::Identity(v, v)), v);
  CHECK((scaled.values - Matrix::Constant(k, k, 0.75)).norm() < 1e-14);

  RngHandle rng(300, 0);
  std::vector<std::vector<Matrix>> g(static_cast<std::size_t>(k)), r(static_cast<std::size_t>(k));
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      g[a].push_back(rng.normal_matrix(v, v));
      r[a].push_back(rng.normal_matrix(v, v));
    }
  }
  const KMatrix km = k_matrix_from_stats(g, r, v);
  for (Index k1 = 0; k1 < k; ++k1) {
    for (Index k2 = 0; k2 < k; ++k2) {
      double brute = 0.0;
      for (Index i = 0; i < v; ++i) {
        for (Index j = 0; j < v; ++j) brute += g[k2][k1](i, j) * r[k1][k2](j, i);
      }
      CHECK(km.values(k1, k2) == doctest::Approx(brute / v).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(k_matrix_from_stats(g, r, v + 1), Error);
}

TEST_CASE("i.i.d. K matrix is the variance of the Hadamard product") {
  CHECK(k_matrix_iid(Matrix::Identity(3, 3), Matrix::Identity(3, 3)).values == Matrix::Identity(3, 3));

  RngHandle rng(301, 0);
  const Index k = 3;
  const SourceModel m = SourceModel::mpe(2.0, oracle::random_spd(k, rng));
  const SourceModel n = SourceModel::gaussian(oracle::random_spd(k, rng));
  const Matrix expected = k_matrix_iid(score_covariance(m), marginal_covariance(n)).values;
  CHECK((expected - kappa_elliptical(2.0, k, m.dispersion()).kappa *
                        marginal_covariance(m).inverse().cwiseProduct(n.dispersion()))
            .norm() < 1e-10);

  const Index draws = 400000;
  const Matrix sm = sample_source(m, draws, rng).data();
  const Matrix sn = sample_source(n, draws, rng).data();
  const Matrix h = model_score(m, sm).phi.cwiseProduct(sn);
  const Matrix var = h * h.transpose() / static_cast<double>(draws);
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      const Eigen::ArrayXd prod = h.row(a).array() * h.row(b).array();
      const double se = std::sqrt((prod - prod.mean()).square().mean() / draws);
      CHECK(std::abs(var(a, b) - expected(a, b)) < 4.0 * se);
    }
  }
}

TEST_CASE("sample-dependent K matrices reduce to the i.i.d. form") {
  RngHandle rng(302, 0);
  const Index k = 2, v = 5;
  const Matrix rm = oracle::random_spd(k, rng);
  const Matrix rn = oracle::random_spd(k, rng);
  // A single-tap MA model is white, so both paths must agree.
  const Matrix bm = rm.llt().matrixL();
  const SourceModel ma_m = SourceModel::vector_ma({bm});
  const SourceModel g_n = SourceModel::gaussian(rn);
  const Matrix iid = rm.inverse().cwiseProduct(rn);
  CHECK((model_k_matrix(ma_m, g_n, v) - iid).norm() < 1e-12);

  // Gaussian process with a dense sample covariance against the V x V block trace.
  const std::vector<Matrix> taps = random_ma_taps(k, 3, rng);
  const Matrix cov = ma_sample_covariance(taps, v);
  const SourceModel gp = SourceModel::gaussian_process(cov, k);
  const SourceModel ma = SourceModel::vector_ma(taps);
  CHECK((model_k_matrix(gp, g_n, v) - model_k_matrix(ma, g_n, v)).norm() < 1e-10);
  const Matrix gamma = cov.inverse();
  const Matrix big_n = ma_sample_covariance(random_ma_taps(k, 2, rng), v);
  const SourceModel gp_n = SourceModel::gaussian_process(big_n, k);
  std::vector<std::vector<Matrix>> gb(k, std::vector<Matrix>(k)), rb(k, std::vector<Matrix>(k));
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      Matrix g(v, v), r(v, v);
      for (Index i = 0; i < v; ++i) {
        for (Index j = 0; j < v; ++j) {
          g(i, j) = gamma(i * k + a, j * k + b);
          r(i, j) = big_n(i * k + a, j * k + b);
        }
      }
      gb[a][b] = g;
      rb[a][b] = r;
    }
  }
  CHECK((model_k_matrix(gp, gp_n, v) - k_matrix_from_stats(gb, rb, v).values).norm() < 1e-10);
}

TEST_CASE("FIM assembly structure") {
  RngHandle rng(303, 0);
  const Index k = 2, v = 7;
  std::vector<SourceModel> models;
  for (int i = 0; i < 3; ++i) models.push_back(SourceModel::mpe(3.0, oracle::random_spd(k, rng)));
  const FimBlocks f = assemble_fim(k_matrices_for_models(models, v));
  REQUIRE(f.pair_blocks.size() == 3);
  CHECK(FimBlocks::pair_index(0, 1, 3) == 0);
  CHECK(FimBlocks::pair_index(0, 2, 3) == 1);
  CHECK(FimBlocks::pair_index(2, 1, 3) == 2);

  const Matrix full = f.permuted();
  CHECK(full.rows() == 3 * k + 3 * 2 * k);
  CHECK(full == full.transpose());
  // Everything outside the diagonal blocks is zero.
  Matrix masked = full;
  Index offset = 0;
  for (Index s : {k, k, k, 2 * k, 2 * k, 2 * k}) {
    masked.block(offset, offset, s, s).setZero();
    offset += s;
  }
  CHECK(masked.cwiseAbs().maxCoeff() == 0.0);

  for (const Matrix& p : f.pair_blocks) {
    CHECK(p.topRightCorner(k, k) == v * Matrix::Identity(k, k));
    CHECK(p.bottomLeftCorner(k, k) == v * Matrix::Identity(k, k));
    CHECK(relative_min_eigenvalue(p) > 1e-3);
  }
}

TEST_CASE("Gaussian identity pair is singular") {
  const Index k = 3, v = 10;
  const std::vector<SourceModel> models{SourceModel::gaussian(Matrix::Identity(k, k)),
                                        SourceModel::gaussian(Matrix::Identity(k, k))};
  const FimBlocks f = assemble_fim(k_matrices_for_models(models, v));
  Matrix expected(2 * k, 2 * k);
  expected << Matrix::Identity(k, k), Matrix::Identity(k, k), Matrix::Identity(k, k), Matrix::Identity(k, k);
  CHECK((f.pair(0, 1) - v * expected).norm() == 0.0);
  CHECK(relative_min_eigenvalue(f.pair(0, 1)) < kFimSingularRatio);
}

TEST_CASE("elliptical pairs with a common covariance are nonsingular") {
  RngHandle rng(304, 0);
  for (int t = 0; t < 10; ++t) {
    const Index k = 2 + t % 3;
    const Matrix r = random_correlation_matrix(k, rng);
    const double km = kappa_elliptical(0.5 + 0.4 * t, k, r).kappa;
    const double kn = kappa_elliptical(3.0, k, r).kappa;
    Matrix f(2 * k, 2 * k);
    const Matrix h = r.inverse().cwiseProduct(r);
    f << km * h, Matrix::Identity(k, k), Matrix::Identity(k, k), kn * h;
    CHECK(relative_min_eigenvalue(f) > 0.0);
  }
}

TEST_CASE("empirical FIM matches the assembled FIM") {
  RngHandle rng(305, 0);
  const Index k = 3;

  SUBCASE("Gaussian SCVs with random covariances") {
    const std::vector<SourceModel> models{SourceModel::gaussian(oracle::random_spd(k, rng)),
                                          SourceModel::gaussian(oracle::random_spd(k, rng)),
                                          SourceModel::gaussian(oracle::random_spd(k, rng))};
    const Index v = 2;
    const EmpiricalFim e = empirical_fim(models, v, 100000, rng);
    const FimBlocks a = assemble_fim(k_matrices_for_models(models, v));
    CHECK(block_rel_error(e.blocks, a) < 0.05);
    CHECK(e.max_mean_z < 4.5);
  }

  SUBCASE("MPE beta = 2") {
    std::vector<SourceModel> models;
    for (int i = 0; i < 2; ++i) models.push_back(SourceModel::mpe(2.0, oracle::random_spd(k, rng)));
    const Index v = 1;
    const EmpiricalFim e = empirical_fim(models, v, 100000, rng);
    const FimBlocks a = assemble_fim(k_matrices_for_models(models, v));
    CHECK(block_rel_error(e.blocks, a) < 0.05);
    const Matrix& p = e.blocks.pair(0, 1);
    CHECK((p.topRightCorner(k, k) - Matrix::Identity(k, k)).norm() < 0.05 * std::sqrt(double(k)));
  }

  SUBCASE("vector MA sources exercise the sample-dependent path") {
    const std::vector<SourceModel> models{SourceModel::vector_ma(random_ma_taps(k, 2, rng)),
                                          SourceModel::vector_ma(random_ma_taps(k, 3, rng))};
    const Index v = 4;
    const EmpiricalFim e = empirical_fim(models, v, 100000, rng);
    const FimBlocks a = assemble_fim(k_matrices_for_models(models, v));
    CHECK(block_rel_error(e.blocks, a) < 0.05);
  }

  SUBCASE("mismatched score model is detected") {
    const std::vector<SourceModel> gen{SourceModel::mpe(3.0, Matrix::Identity(k, k)),
                                       SourceModel::mpe(3.0, Matrix::Identity(k, k))};
    const std::vector<SourceModel> wrong{SourceModel::gaussian(2.0 * Matrix::Identity(k, k)),
                                         SourceModel::gaussian(2.0 * Matrix::Identity(k, k))};
    CHECK_THROWS_WITH_AS(empirical_fim(gen, wrong, 1, 20000, rng), "model mismatch", Error);
  }
}
