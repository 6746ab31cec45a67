#include "jbss/fim.hpp"

#include "jbss/score.hpp"
#include "jbss/sources.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>

namespace jbss {

namespace {

using Sparse = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// KV x KV covariance of the sample-major stacking [s(1); ...; s(V)].
Sparse full_covariance(const SourceModel& model, Index v) {
  const Index k = model.k_datasets();
  std::vector<Triplet> trips;
  auto put_block = [&](Index v1, Index v2, const Matrix& block) {
    for (Index a = 0; a < k; ++a) {
      for (Index b = 0; b < k; ++b) {
        if (block(a, b) != 0.0) trips.emplace_back(v1 * k + a, v2 * k + b, block(a, b));
      }
    }
  };
  if (model.sample_covariance()) {
    const Matrix& c = *model.sample_covariance();
    if (c.rows() != k * v) {
      throw Error("sample covariance does not match V");
    }
    Sparse out = c.sparseView();
    out.makeCompressed();
    return out;
  }
  if (model.family() == SourceFamily::VectorMaGaussian) {
    const auto& taps = model.ma_taps();
    const Index l = static_cast<Index>(taps.size());
    for (Index lag = 0; lag < std::min(l, v); ++lag) {
      const Matrix c = ma_lag_covariance(taps, lag);
      for (Index v1 = lag; v1 < v; ++v1) {
        put_block(v1, v1 - lag, c);
        if (lag > 0) put_block(v1 - lag, v1, c.transpose());
      }
    }
  } else {
    const Matrix r = marginal_covariance(model);
    for (Index t = 0; t < v; ++t) put_block(t, t, r);
  }
  Sparse out(k * v, k * v);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

void require_same_k(const SourceModel& a, const SourceModel& b) {
  if (a.k_datasets() != b.k_datasets()) {
    throw Error("models disagree on K");
  }
}

}  // namespace

KMatrix k_matrix_from_stats(const std::vector<std::vector<Matrix>>& gamma_blocks,
                            const std::vector<std::vector<Matrix>>& r_blocks, Index v_samples, Index m, Index n) {
  if (m == n) {
    throw Error("k_matrix_from_stats needs m != n");
  }
  const Index k = static_cast<Index>(gamma_blocks.size());
  if (k == 0 || static_cast<Index>(r_blocks.size()) != k) {
    throw Error("K matrix: dataset block grids must be K x K");
  }
  KMatrix out{Matrix::Zero(k, k), m, n};
  for (Index k1 = 0; k1 < k; ++k1) {
    for (Index k2 = 0; k2 < k; ++k2) {
      const auto& g_row = gamma_blocks[static_cast<std::size_t>(k2)];
      const auto& r_row = r_blocks[static_cast<std::size_t>(k1)];
      if (static_cast<Index>(g_row.size()) != k || static_cast<Index>(r_row.size()) != k) {
        throw Error("K matrix: dataset block grids must be K x K");
      }
      const Matrix& g = g_row[static_cast<std::size_t>(k1)];
      const Matrix& r = r_row[static_cast<std::size_t>(k2)];
      if (g.rows() != v_samples || g.cols() != v_samples || r.rows() != v_samples || r.cols() != v_samples) {
        throw Error("K matrix: blocks must be V x V");
      }
      // tr(G R) without forming the product.
      out.values(k1, k2) = g.cwiseProduct(r.transpose()).sum() / static_cast<double>(v_samples);
    }
  }
  return out;
}

KMatrix k_matrix_iid(const Matrix& gamma_m, const Matrix& r_n, Index m, Index n) {
  if (gamma_m.rows() != gamma_m.cols() || gamma_m.rows() != r_n.rows() || r_n.rows() != r_n.cols()) {
    throw Error("K matrix: shape mismatch");
  }
  return KMatrix{gamma_m.cwiseProduct(r_n), m, n};
}

KMatrixSet::KMatrixSet(Index n_sources, Index k_datasets, Index v_samples)
    : n_(n_sources), k_(k_datasets), v_(v_samples),
      grid_(static_cast<std::size_t>(n_sources * n_sources)) {
  if (n_sources < 1 || k_datasets < 1 || v_samples < 1) {
    throw Error("K matrix set needs N, K, V >= 1");
  }
}

const Matrix& KMatrixSet::at(Index m, Index n) const {
  const Matrix& out = grid_[static_cast<std::size_t>(m * n_ + n)];
  if (out.size() == 0) {
    throw Error("missing K matrix for pair (" + std::to_string(m) + ", " + std::to_string(n) + ")");
  }
  return out;
}

void KMatrixSet::set(Index m, Index n, Matrix values) {
  if (m < 0 || n < 0 || m >= n_ || n >= n_ || values.rows() != k_ || values.cols() != k_) {
    throw Error("K matrix set: bad index or shape");
  }
  grid_[static_cast<std::size_t>(m * n_ + n)] = std::move(values);
}

bool KMatrixSet::has(Index m, Index n) const { return grid_[static_cast<std::size_t>(m * n_ + n)].size() > 0; }

Matrix model_k_matrix(const SourceModel& model_m, const SourceModel& model_n, Index v_samples) {
  require_same_k(model_m, model_n);
  if (model_m.is_iid() && model_n.is_iid()) {
    return score_covariance(model_m).cwiseProduct(marginal_covariance(model_n));
  }
  if (!model_m.is_gaussian()) {
    throw Error("sample-dependent K matrices need a Gaussian model");
  }
  const Index k = model_m.k_datasets();
  const Index dim = k * v_samples;
  const Sparse rn = full_covariance(model_n, v_samples);
  Matrix out = Matrix::Zero(k, k);
  if (model_m.is_iid()) {
    const Matrix g = score_covariance(model_m);
    for (Index c = 0; c < dim; ++c) {
      for (Sparse::InnerIterator it(rn, c); it; ++it) {
        const Index r = it.row();
        if (r / k == c / k) out(r % k, c % k) += g(r % k, c % k) * it.value();
      }
    }
  } else {
    // Gamma_m = R_m^-1; only its entries on the pattern of R_n are needed.
    const Sparse rm = full_covariance(model_m, v_samples);
    const Eigen::SimplicialLLT<Sparse> llt(rm);
    if (llt.info() != Eigen::Success) {
      throw Error("sample covariance is not positive definite");
    }
    Vector e = Vector::Zero(dim);
    for (Index c = 0; c < dim; ++c) {
      e(c) = 1.0;
      const Vector col = llt.solve(e);
      e(c) = 0.0;
      for (Sparse::InnerIterator it(rn, c); it; ++it) {
        out(it.row() % k, c % k) += col(it.row()) * it.value();
      }
    }
  }
  return out / static_cast<double>(v_samples);
}

KMatrixSet k_matrices_for_models(const std::vector<SourceModel>& models, Index v_samples) {
  if (models.empty()) {
    throw Error("no source models");
  }
  const Index n = static_cast<Index>(models.size());
  const Index k = models.front().k_datasets();
  KMatrixSet out(n, k, v_samples);
  const double v = static_cast<double>(v_samples);
  for (Index a = 0; a < n; ++a) {
    const SourceModel& ma = models[static_cast<std::size_t>(a)];
    require_same_k(ma, models.front());
    for (Index b = 0; b < n; ++b) {
      if (a != b) {
        out.set(a, b, model_k_matrix(ma, models[static_cast<std::size_t>(b)], v_samples));
      }
    }
    // Diagonal entry: (V - 1) + E[phi s phi s] for i.i.d. models; for
    // Gaussian models the Isserlis expansion gives V + I + (Gamma o R) summed.
    if (ma.is_iid()) {
      out.set(a, a, score_signal_fourth_moment(ma).array() + (v - 1.0));
    } else {
      out.set(a, a, (model_k_matrix(ma, ma, v_samples) + Matrix::Identity(k, k)).array() + v);
    }
  }
  return out;
}

std::size_t FimBlocks::pair_index(Index m, Index n, Index n_sources) {
  if (m == n || m < 0 || n < 0 || m >= n_sources || n >= n_sources) {
    throw Error("bad source pair");
  }
  if (m > n) std::swap(m, n);
  // Row-major enumeration of the strict upper triangle.
  return static_cast<std::size_t>(m * n_sources - m * (m + 1) / 2 + (n - m - 1));
}

const Matrix& FimBlocks::pair(Index m, Index n) const { return pair_blocks.at(pair_index(m, n, n_sources)); }

Matrix& FimBlocks::pair(Index m, Index n) { return pair_blocks.at(pair_index(m, n, n_sources)); }

Matrix FimBlocks::permuted() const {
  std::vector<Matrix> blocks = diag_blocks;
  blocks.insert(blocks.end(), pair_blocks.begin(), pair_blocks.end());
  return direct_sum(blocks);
}

FimBlocks assemble_fim(const KMatrixSet& km) {
  const Index n = km.n_sources();
  const Index k = km.k_datasets();
  const double v = static_cast<double>(km.v_samples());
  FimBlocks out;
  out.n_sources = n;
  out.k_datasets = k;
  out.v_samples = km.v_samples();
  for (Index a = 0; a < n; ++a) {
    out.diag_blocks.push_back(v * (km.at(a, a).array() - v).matrix());
  }
  const Matrix eye = v * Matrix::Identity(k, k);
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      Matrix f(2 * k, 2 * k);
      f.topLeftCorner(k, k) = v * km.at(a, b);
      f.topRightCorner(k, k) = eye;
      f.bottomLeftCorner(k, k) = eye;
      f.bottomRightCorner(k, k) = v * km.at(b, a);
      out.pair_blocks.push_back(std::move(f));
    }
  }
  return out;
}

double relative_min_eigenvalue(const Matrix& block) {
  const Matrix sym = 0.5 * (block + block.transpose());
  const Vector eig = Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues();
  const double scale = eig.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return eig.minCoeff() / scale;
}

EmpiricalFim empirical_fim(const std::vector<SourceModel>& models, Index v_samples, Index realizations,
                           RngHandle& rng) {
  return empirical_fim(models, models, v_samples, realizations, rng);
}

EmpiricalFim empirical_fim(const std::vector<SourceModel>& models, const std::vector<SourceModel>& score_models,
                           Index v_samples, Index realizations, RngHandle& rng) {
  if (models.size() != score_models.size()) {
    throw Error("generator and score model lists differ in length");
  }
  if (models.empty()) {
    throw Error("no source models");
  }
  if (realizations < 2 || v_samples < 1) {
    throw Error("empirical FIM needs at least 2 realizations and V >= 1");
  }
  const Index n = static_cast<Index>(models.size());
  const Index k = models.front().k_datasets();
  const Index total = realizations * v_samples;
  std::vector<Matrix> s(static_cast<std::size_t>(n));
  std::vector<Matrix> phi(static_cast<std::size_t>(n));
  for (Index a = 0; a < n; ++a) {
    const SourceModel& model = models[static_cast<std::size_t>(a)];
    const SourceModel& scorer = score_models[static_cast<std::size_t>(a)];
    require_same_k(model, models.front());
    require_same_k(scorer, model);
    RngHandle stream = rng.split(static_cast<std::uint64_t>(a));
    Matrix& sa = s[static_cast<std::size_t>(a)];
    Matrix& pa = phi[static_cast<std::size_t>(a)];
    if (model.is_iid() && scorer.is_iid()) {
      sa = sample_source(model, total, stream).data();
      pa = model_score(scorer, sa).phi;
    } else {
      sa.resize(k, total);
      for (Index t = 0; t < realizations; ++t) {
        sa.middleCols(t * v_samples, v_samples) = sample_source(model, v_samples, stream).data();
      }
      if (scorer.is_iid()) {
        pa = model_score(scorer, sa).phi;
      } else {
        // One dense precision shared by every realization.
        const Matrix prec = spd_inverse(Matrix(full_covariance(scorer, v_samples)));
        pa.resize(k, total);
        for (Index t = 0; t < realizations; ++t) {
          const Matrix chunk = sa.middleCols(t * v_samples, v_samples);
          const Eigen::Map<const Vector> flat(chunk.data(), chunk.size());
          const Vector score = prec * flat;
          pa.middleCols(t * v_samples, v_samples) = Eigen::Map<const Matrix>(score.data(), k, v_samples);
        }
      }
    }
  }

  const Index dim = k * n * n;
  auto idx = [&](Index m, Index nn, Index kk) { return (m * n + nn) * k + kk; };
  Matrix grad(dim, realizations);
  Eigen::RowVectorXd prod(total);
  for (Index m = 0; m < n; ++m) {
    for (Index nn = 0; nn < n; ++nn) {
      for (Index kk = 0; kk < k; ++kk) {
        prod = phi[static_cast<std::size_t>(m)].row(kk).cwiseProduct(s[static_cast<std::size_t>(nn)].row(kk));
        const Eigen::Map<const Matrix> per(prod.data(), v_samples, realizations);
        grad.row(idx(m, nn, kk)) = -per.colwise().sum();
        if (m == nn) grad.row(idx(m, nn, kk)).array() += static_cast<double>(v_samples);
      }
    }
  }

  const Vector mean = grad.rowwise().mean();
  grad.colwise() -= mean;
  const Matrix cov = grad * grad.transpose() / static_cast<double>(realizations - 1);

  EmpiricalFim out;
  out.realizations = realizations;
  for (Index i = 0; i < dim; ++i) {
    const double se = std::sqrt(cov(i, i) / static_cast<double>(realizations));
    const double z = se > 0.0 ? std::abs(mean(i)) / se : (mean(i) == 0.0 ? 0.0 : INFINITY);
    out.max_mean_z = std::max(out.max_mean_z, z);
  }
  if (out.max_mean_z > 5.0) {
    throw Error("model mismatch");
  }

  FimBlocks& f = out.blocks;
  f.n_sources = n;
  f.k_datasets = k;
  f.v_samples = v_samples;
  for (Index a = 0; a < n; ++a) {
    Matrix d(k, k);
    for (Index k1 = 0; k1 < k; ++k1) {
      for (Index k2 = 0; k2 < k; ++k2) d(k1, k2) = cov(idx(a, a, k1), idx(a, a, k2));
    }
    f.diag_blocks.push_back(std::move(d));
  }
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      std::vector<Index> sel;
      for (Index kk = 0; kk < k; ++kk) sel.push_back(idx(a, b, kk));
      for (Index kk = 0; kk < k; ++kk) sel.push_back(idx(b, a, kk));
      Matrix p(2 * k, 2 * k);
      for (Index i = 0; i < 2 * k; ++i) {
        for (Index j = 0; j < 2 * k; ++j) p(i, j) = cov(sel[i], sel[j]);
      }
      f.pair_blocks.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace jbss
