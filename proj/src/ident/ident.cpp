#include "jbss/ident.hpp"

#include "jbss/fim.hpp"
#include "jbss/score.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>

namespace jbss {

namespace {

constexpr double kEdgeTol = 1e-10;
constexpr Index kMaxDenseDim = 4096;

using Subset = std::vector<Index>;

// Second-order description of a wholly Gaussian model. Stationary models
// carry lag blocks C(l) = E[s(v) s(v - l)^T]; others carry the dense KV x KV
// sample-major covariance.
struct GaussianView {
  bool gaussian = false;
  std::vector<Matrix> lags;
  std::optional<Matrix> dense;
};

GaussianView view_of(const SourceModel& model, bool lag_zero_only, Index v_samples) {
  GaussianView out;
  out.gaussian = model.is_gaussian();
  if (!out.gaussian) return out;
  if (model.sample_covariance()) {
    if (lag_zero_only) {
      throw Error("model is not i.i.d.; use the general check");
    }
    const Matrix& c = *model.sample_covariance();
    if (c.rows() != model.k_datasets() * v_samples) {
      throw Error("sample covariance does not match V");
    }
    out.dense = c;
    return out;
  }
  if (model.family() == SourceFamily::VectorMaGaussian) {
    if (lag_zero_only) {
      throw Error("model is not i.i.d.; use the general check");
    }
    const auto& taps = model.ma_taps();
    const Index l = std::min(static_cast<Index>(taps.size()), v_samples);
    for (Index lag = 0; lag < l; ++lag) out.lags.push_back(ma_lag_covariance(taps, lag));
    return out;
  }
  out.lags.push_back(marginal_covariance(model));
  return out;
}

Matrix to_dense(const GaussianView& view, Index k, Index v) {
  if (view.dense) return *view.dense;
  Matrix out = Matrix::Zero(k * v, k * v);
  for (Index lag = 0; lag < static_cast<Index>(view.lags.size()); ++lag) {
    const Matrix& c = view.lags[static_cast<std::size_t>(lag)];
    for (Index t = lag; t < v; ++t) {
      out.block(t * k, (t - lag) * k, k, k) = c;
      if (lag > 0) out.block((t - lag) * k, t * k, k, k) = c.transpose();
    }
  }
  return out;
}

// Dependency graph over datasets: an edge wherever some covariance entry
// between the two datasets is non-negligible.
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> dependency_graph(const GaussianView& view, Index k) {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> adj;
  adj.setConstant(k, k, false);
  auto mark = [&](Index a, Index b, double x, double saa, double sbb) {
    if (a != b && std::abs(x) > kEdgeTol * std::sqrt(saa * sbb)) {
      adj(a, b) = true;
      adj(b, a) = true;
    }
  };
  if (view.dense) {
    const Matrix& c = *view.dense;
    for (Index i = 0; i < c.rows(); ++i) {
      for (Index j = 0; j < c.cols(); ++j) mark(i % k, j % k, c(i, j), c(i, i), c(j, j));
    }
  } else {
    const Matrix& c0 = view.lags.front();
    for (const Matrix& c : view.lags) {
      for (Index a = 0; a < k; ++a) {
        for (Index b = 0; b < k; ++b) mark(a, b, c(a, b), c0(a, a), c0(b, b));
      }
    }
  }
  return adj;
}

std::vector<Subset> components(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& adj) {
  const Index k = adj.rows();
  std::vector<Index> label(static_cast<std::size_t>(k), -1);
  std::vector<Subset> out;
  for (Index s = 0; s < k; ++s) {
    if (label[static_cast<std::size_t>(s)] >= 0) continue;
    Subset comp;
    std::queue<Index> q;
    q.push(s);
    label[static_cast<std::size_t>(s)] = static_cast<Index>(out.size());
    while (!q.empty()) {
      const Index a = q.front();
      q.pop();
      comp.push_back(a);
      for (Index b = 0; b < k; ++b) {
        if (adj(a, b) && label[static_cast<std::size_t>(b)] < 0) {
          label[static_cast<std::size_t>(b)] = label[static_cast<std::size_t>(s)];
          q.push(b);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

Matrix restrict(const Matrix& c, const Subset& alpha) {
  const Index d = static_cast<Index>(alpha.size());
  Matrix out(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) out(i, j) = c(alpha[static_cast<std::size_t>(i)], alpha[static_cast<std::size_t>(j)]);
  }
  return out;
}

Matrix restrict_dense(const Matrix& c, Index k, const Subset& alpha) {
  const Index v = c.rows() / k;
  const Index d = static_cast<Index>(alpha.size());
  Matrix out(d * v, d * v);
  for (Index v1 = 0; v1 < v; ++v1) {
    for (Index i = 0; i < d; ++i) {
      for (Index v2 = 0; v2 < v; ++v2) {
        for (Index j = 0; j < d; ++j) {
          out(v1 * d + i, v2 * d + j) =
              c(v1 * k + alpha[static_cast<std::size_t>(i)], v2 * k + alpha[static_cast<std::size_t>(j)]);
        }
      }
    }
  }
  return out;
}

// Magnitudes from the diagonals, signs by a breadth-first walk over the
// strongest entry of each dataset pair.
std::optional<Vector> solve_signs(const Vector& diag_m, const Vector& diag_n, const Matrix& rep_m,
                                  const Matrix& rep_n) {
  const Index d = diag_n.size();
  Vector mag(d);
  for (Index i = 0; i < d; ++i) {
    if (diag_n(i) == 0.0) {
      throw Error("zero diagonal entry in R_n");
    }
    const double ratio = diag_m(i) / diag_n(i);
    if (!(ratio > 0.0) || !std::isfinite(ratio)) return std::nullopt;
    mag(i) = std::sqrt(ratio);
  }
  Vector sign = Vector::Zero(d);
  for (Index s = 0; s < d; ++s) {
    if (sign(s) != 0.0) continue;
    sign(s) = 1.0;
    std::queue<Index> q;
    q.push(s);
    while (!q.empty()) {
      const Index a = q.front();
      q.pop();
      for (Index b = 0; b < d; ++b) {
        if (sign(b) != 0.0 || a == b) continue;
        if (!(std::abs(rep_n(a, b)) > kEdgeTol * std::sqrt(std::abs(diag_n(a) * diag_n(b))))) continue;
        sign(b) = (rep_m(a, b) / rep_n(a, b) >= 0.0) ? sign(a) : -sign(a);
        q.push(b);
      }
    }
  }
  return Vector(mag.cwiseProduct(sign));
}

// Largest-|R_n| entry per dataset pair, with the matching R_m entry.
void representatives(std::span<const Matrix> bm, std::span<const Matrix> bn, Matrix& rep_m, Matrix& rep_n) {
  const Index d = bn.front().rows();
  rep_m = Matrix::Zero(d, d);
  rep_n = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < bn.size(); ++i) {
    for (Index a = 0; a < d; ++a) {
      for (Index b = 0; b < d; ++b) {
        for (const auto& [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
          if (std::abs(bn[i](x, y)) > std::abs(rep_n(a, b))) {
            rep_n(a, b) = bn[i](x, y);
            rep_m(a, b) = bm[i](x, y);
          }
        }
      }
    }
  }
}

bool verify(const Matrix& cm, const Matrix& cn, const Vector& dd, double tol, double scale) {
  const Matrix resid = cm - dd.asDiagonal() * cn * dd.asDiagonal();
  return resid.cwiseAbs().maxCoeff() <= tol * scale;
}

std::optional<Vector> dense_similar(const Matrix& cm, const Matrix& cn, Index d, double tol) {
  const Index v = cm.rows() / d;
  Matrix rep_m = Matrix::Zero(d, d), rep_n = Matrix::Zero(d, d);
  for (Index i = 0; i < cn.rows(); ++i) {
    for (Index j = 0; j < cn.cols(); ++j) {
      const Index a = i % d, b = j % d;
      if (std::abs(cn(i, j)) > std::abs(rep_n(a, b))) {
        rep_n(a, b) = rep_n(b, a) = cn(i, j);
        rep_m(a, b) = rep_m(b, a) = cm(i, j);
      }
    }
  }
  const Vector diag_m = cm.diagonal().head(d);
  const Vector diag_n = cn.diagonal().head(d);
  const std::optional<Vector> dvec = solve_signs(diag_m, diag_n, rep_m, rep_n);
  if (!dvec) return std::nullopt;
  const Vector dd = dvec->replicate(v, 1);
  if (!verify(cm, cn, dd, tol, cm.cwiseAbs().maxCoeff())) return std::nullopt;
  return dvec;
}

struct PairContext {
  const GaussianView* m;
  const GaussianView* n;
  Index k;
  Index v;
};

std::optional<Vector> similar_on(const PairContext& ctx, const Subset& alpha) {
  if (ctx.m->dense || ctx.n->dense) {
    const Index d = static_cast<Index>(alpha.size());
    if (d * ctx.v > kMaxDenseDim) {
      throw Error("V too large for dense K_alpha V covariance (limit 4096)");
    }
    const Matrix cm = restrict_dense(to_dense(*ctx.m, ctx.k, ctx.v), ctx.k, alpha);
    const Matrix cn = restrict_dense(to_dense(*ctx.n, ctx.k, ctx.v), ctx.k, alpha);
    return dense_similar(cm, cn, d, 1e-8);
  }
  const std::size_t lags = std::max(ctx.m->lags.size(), ctx.n->lags.size());
  const Index d = static_cast<Index>(alpha.size());
  std::vector<Matrix> bm, bn;
  for (std::size_t l = 0; l < lags; ++l) {
    bm.push_back(l < ctx.m->lags.size() ? restrict(ctx.m->lags[l], alpha) : Matrix::Zero(d, d));
    bn.push_back(l < ctx.n->lags.size() ? restrict(ctx.n->lags[l], alpha) : Matrix::Zero(d, d));
  }
  return diag_similar_blocks(bm, bn, 1e-8);
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> union_graph(const GaussianView& a, const GaussianView& b,
                                                               Index k) {
  return dependency_graph(a, k) || dependency_graph(b, k);
}

IdentVerdict run_check(const std::vector<SourceModel>& models, bool iid_only, Index v_samples) {
  if (models.size() < 2) {
    throw Error("identifiability needs at least two sources");
  }
  if (v_samples < 1) {
    throw Error("V must be >= 1");
  }
  const Index k = models.front().k_datasets();
  std::vector<GaussianView> views;
  for (const SourceModel& m : models) {
    if (m.k_datasets() != k) {
      throw Error("models disagree on K");
    }
    views.push_back(view_of(m, iid_only, v_samples));
  }
  const bool any_dense = std::any_of(views.begin(), views.end(), [](const GaussianView& g) { return g.dense.has_value(); });
  const std::string regime = iid_only ? "iid" : (any_dense ? "sample-dependent-dense" : "sample-dependent");

  IdentVerdict out;
  const Index n = static_cast<Index>(models.size());
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      const GaussianView& va = views[static_cast<std::size_t>(a)];
      const GaussianView& vb = views[static_cast<std::size_t>(b)];
      if (!va.gaussian || !vb.gaussian) continue;
      // A subset is an alpha-Gaussian component of both sources exactly when
      // it is a union of connected blocks of the joint graph; similarity on
      // a union holds iff it holds on each block.
      const PairContext ctx{&va, &vb, k, v_samples};
      std::vector<std::pair<Index, double>> hits;
      for (const Subset& alpha : components(union_graph(va, vb, k))) {
        const std::optional<Vector> d = similar_on(ctx, alpha);
        if (!d) continue;
        for (std::size_t i = 0; i < alpha.size(); ++i) hits.emplace_back(alpha[i], (*d)(static_cast<Index>(i)));
      }
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end());
      IdentViolation viol{a, b, {}, Vector(static_cast<Index>(hits.size())), regime};
      for (std::size_t i = 0; i < hits.size(); ++i) {
        viol.alpha.push_back(hits[i].first);
        viol.d(static_cast<Index>(i)) = hits[i].second;
      }
      if (viol.d(0) < 0.0) viol.d = -viol.d;
      out.violations.push_back(std::move(viol));
    }
  }
  out.identifiable = out.violations.empty();
  const CommonPermutationResult perm = check_common_permutation(models);
  out.common_permutation = perm.common;
  out.permutation_violations = perm.violations;
  return out;
}

}  // namespace

std::optional<Vector> diag_similar_blocks(std::span<const Matrix> blocks_m, std::span<const Matrix> blocks_n,
                                          double tol) {
  if (blocks_m.empty() || blocks_m.size() != blocks_n.size()) {
    throw Error("block lists must be nonempty and of equal length");
  }
  const Index d = blocks_n.front().rows();
  for (std::size_t i = 0; i < blocks_m.size(); ++i) {
    if (blocks_m[i].rows() != d || blocks_m[i].cols() != d || blocks_n[i].rows() != d || blocks_n[i].cols() != d) {
      throw Error("blocks must share one square shape");
    }
  }
  if (d < 1) {
    throw Error("dimension must be >= 1");
  }
  Matrix rep_m, rep_n;
  representatives(blocks_m, blocks_n, rep_m, rep_n);
  const std::optional<Vector> dvec =
      solve_signs(blocks_m.front().diagonal(), blocks_n.front().diagonal(), rep_m, rep_n);
  if (!dvec) return std::nullopt;
  double scale = 0.0;
  for (const Matrix& b : blocks_m) scale = std::max(scale, b.cwiseAbs().maxCoeff());
  for (std::size_t i = 0; i < blocks_m.size(); ++i) {
    if (!verify(blocks_m[i], blocks_n[i], *dvec, tol, scale)) return std::nullopt;
  }
  return dvec;
}

std::optional<Vector> diag_similar(const Matrix& r_m, const Matrix& r_n, double tol) {
  const std::array<Matrix, 1> bm{r_m}, bn{r_n};
  return diag_similar_blocks(bm, bn, tol);
}

bool IdentVerdict::pair_flagged(Index m, Index n) const {
  return std::any_of(violations.begin(), violations.end(), [&](const IdentViolation& v) {
    return (v.m == m && v.n == n) || (v.m == n && v.n == m);
  });
}

std::string IdentVerdict::to_json() const {
  nlohmann::json j;
  j["identifiable"] = identifiable;
  j["violations"] = nlohmann::json::array();
  for (const IdentViolation& v : violations) {
    j["violations"].push_back({{"m", v.m},
                               {"n", v.n},
                               {"alpha", v.alpha},
                               {"d", std::vector<double>(v.d.data(), v.d.data() + v.d.size())},
                               {"regime", v.regime}});
  }
  j["common_permutation"] = common_permutation;
  j["permutation_violations"] = nlohmann::json::array();
  for (const PermutationViolation& v : permutation_violations) {
    j["permutation_violations"].push_back({{"m", v.m}, {"n", v.n}, {"alpha", v.alpha}});
  }
  return j.dump(2);
}

IdentVerdict check_iva_identifiability_iid(const std::vector<SourceModel>& models) {
  return run_check(models, true, 1);
}

IdentVerdict check_iva_identifiability_general(const std::vector<SourceModel>& models, Index v_samples) {
  return run_check(models, false, v_samples);
}

CommonPermutationResult check_common_permutation(const std::vector<SourceModel>& models) {
  CommonPermutationResult out;
  const Index n = static_cast<Index>(models.size());
  if (n == 0) return out;
  const Index k = models.front().k_datasets();
  // Only Gaussian models can split; the graph of a dense model needs no V.
  std::vector<GaussianView> views;
  for (const SourceModel& m : models) {
    GaussianView g;
    g.gaussian = m.is_gaussian();
    if (g.gaussian) {
      if (m.sample_covariance()) {
        g.dense = *m.sample_covariance();
      } else if (m.family() == SourceFamily::VectorMaGaussian) {
        for (Index lag = 0; lag < static_cast<Index>(m.ma_taps().size()); ++lag) {
          g.lags.push_back(ma_lag_covariance(m.ma_taps(), lag));
        }
      } else {
        g.lags.push_back(marginal_covariance(m));
      }
    }
    views.push_back(std::move(g));
  }
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      const GaussianView& va = views[static_cast<std::size_t>(a)];
      const GaussianView& vb = views[static_cast<std::size_t>(b)];
      if (!va.gaussian || !vb.gaussian) continue;
      const std::vector<Subset> comps = components(union_graph(va, vb, k));
      if (comps.size() < 2) continue;
      for (const Subset& alpha : comps) out.violations.push_back(PermutationViolation{a, b, alpha});
    }
  }
  out.common = out.violations.empty();
  return out;
}

FimSingularityReport verify_fim_singularity(const std::vector<SourceModel>& models, Index v_samples) {
  const bool iid = std::all_of(models.begin(), models.end(), [](const SourceModel& m) { return m.is_iid(); });
  const IdentVerdict verdict =
      iid ? check_iva_identifiability_iid(models) : check_iva_identifiability_general(models, v_samples);
  const FimBlocks fim = assemble_fim(k_matrices_for_models(models, v_samples));
  const Index n = static_cast<Index>(models.size());
  FimSingularityReport out;
  out.relative_min_eigenvalue = Matrix::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  out.numeric_singular.setConstant(n, n, false);
  out.symbolic_flagged.setConstant(n, n, false);
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      const double r = relative_min_eigenvalue(fim.pair(a, b));
      out.relative_min_eigenvalue(a, b) = r;
      out.numeric_singular(a, b) = r < kFimSingularRatio;
      out.symbolic_flagged(a, b) = verdict.pair_flagged(a, b);
      if (out.numeric_singular(a, b) != out.symbolic_flagged(a, b)) out.agrees = false;
    }
  }
  return out;
}

}  // namespace jbss
