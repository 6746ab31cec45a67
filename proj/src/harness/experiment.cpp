#include "jbss/bounds.hpp"
#include "jbss/harness.hpp"
#include "jbss/io.hpp"
#include "jbss/metrics.hpp"
#include "jbss/score.hpp"
#include "jbss/sources.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

namespace jbss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_mpe_kind(ExperimentKind k) {
  return k == ExperimentKind::MpeCorrelated || k == ExperimentKind::MpeBetaSelect || k == ExperimentKind::MpeIdentity;
}

ExperimentKind kind_from(const KeyValueConfig& cfg) {
  const std::string s = cfg.text("kind", "mpe-correlated");
  if (s == "mpe-correlated") return ExperimentKind::MpeCorrelated;
  if (s == "mpe-beta-select") return ExperimentKind::MpeBetaSelect;
  if (s == "mpe-identity") return ExperimentKind::MpeIdentity;
  if (s == "jdiag-lags") return ExperimentKind::JdiagLags;
  if (s == "custom") return ExperimentKind::Custom;
  cfg.fail("kind", "unknown kind '" + s + "' (mpe-correlated, mpe-beta-select, mpe-identity, jdiag-lags, custom)");
}

std::vector<double> grid_of(const ExperimentConfig& c) {
  if (is_mpe_kind(c.kind)) return c.beta_grid;
  if (c.kind == ExperimentKind::JdiagLags) {
    std::vector<double> g;
    for (Index l : c.lags) g.push_back(static_cast<double>(l));
    return g;
  }
  return {kNaN};
}

Matrix energy_of(const std::vector<SourceModel>& models) {
  Matrix e(static_cast<Index>(models.size()), models.front().k_datasets());
  for (std::size_t i = 0; i < models.size(); ++i) {
    e.row(static_cast<Index>(i)) = marginal_covariance(models[i]).diagonal().transpose();
  }
  return e;
}

std::string grid_name(ExperimentKind k) {
  if (is_mpe_kind(k)) return "beta";
  if (k == ExperimentKind::JdiagLags) return "lags";
  return "none";
}

double stderr_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return kNaN;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::MpeCorrelated: return "mpe-correlated";
    case ExperimentKind::MpeBetaSelect: return "mpe-beta-select";
    case ExperimentKind::MpeIdentity: return "mpe-identity";
    case ExperimentKind::JdiagLags: return "jdiag-lags";
    case ExperimentKind::Custom: return "custom";
  }
  return "unknown";
}

std::string to_string(Aggregation a) { return a == Aggregation::MeanSuccessful ? "mean-successful" : "median-all"; }

void ExperimentConfig::validate() const {
  if (trials < 1) throw Error("trial count must be at least 1");
  if (n_sources < 2) throw Error("at least two sources are required");
  if (k_datasets < 1) throw Error("at least one dataset is required");
  if (v_samples.empty()) throw Error("at least one sample size is required");
  for (Index v : v_samples) {
    if (v <= n_sources) throw Error("every sample size must exceed the number of sources");
  }
  if (is_mpe_kind(kind)) {
    if (beta_grid.empty()) throw Error("the beta grid must be nonempty");
    for (double b : beta_grid) {
      if (!(b > 0.0)) throw Error("beta grid values must be positive");
    }
  }
  if (kind == ExperimentKind::MpeBetaSelect && beta_candidates.empty()) throw Error("beta candidates must be nonempty");
  if (kind == ExperimentKind::JdiagLags) {
    if (lags.empty()) throw Error("the lag list must be nonempty");
    if (ma_order < 1) throw Error("MA order must be at least 1");
    for (Index l : lags) {
      if (l < 1) throw Error("lag counts must be at least 1");
    }
  }
  if (kind == ExperimentKind::Custom) {
    if (custom_models.size() < 2) throw Error("custom experiments need at least two sources");
    if (algorithm != "iva-mpe" && algorithm != "jdiag") throw Error("algorithm must be iva-mpe or jdiag");
  }
  if (threads < 1) throw Error("threads must be at least 1");
  fit.validate();
}

ExperimentConfig parse_experiment_config(const KeyValueConfig& cfg) {
  static const std::vector<std::string> kKeys{
      "kind",    "n_sources", "k_datasets",  "v_samples", "beta",           "beta_candidates", "ma_order",
      "lags",    "trials",    "seed",        "aggregation", "out",          "threads",         "starts",
      "max_iterations", "tolerance", "algorithm", "sources"};
  cfg.check_keys([](const std::string& key) {
    return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end() || key.rfind("source.", 0) == 0;
  });

  ExperimentConfig c;
  c.kind = kind_from(cfg);
  if (c.kind == ExperimentKind::JdiagLags) {
    c.k_datasets = 3;
    c.v_samples = {1000};
  }
  if (c.kind == ExperimentKind::MpeIdentity) c.aggregation = Aggregation::MedianAll;

  c.n_sources = cfg.integer("n_sources", c.n_sources);
  c.k_datasets = cfg.integer("k_datasets", c.k_datasets);
  c.v_samples = cfg.integers("v_samples", c.v_samples);
  c.beta_grid = cfg.reals("beta", c.beta_grid);
  c.beta_candidates = cfg.reals("beta_candidates", c.beta_candidates);
  c.ma_order = cfg.integer("ma_order", c.ma_order);
  c.lags = cfg.integers("lags", c.lags);
  c.trials = cfg.integer("trials", c.trials);
  const Index seed = cfg.integer("seed", 1);
  if (seed < 0) cfg.fail("seed", "'seed' must be non-negative");
  c.seed = static_cast<std::uint64_t>(seed);
  const std::string agg = cfg.text("aggregation", to_string(c.aggregation));
  if (agg == "mean-successful") {
    c.aggregation = Aggregation::MeanSuccessful;
  } else if (agg == "median-all") {
    c.aggregation = Aggregation::MedianAll;
  } else {
    cfg.fail("aggregation", "aggregation must be mean-successful or median-all");
  }
  c.out_dir = cfg.text("out", c.out_dir);
  c.threads = static_cast<int>(cfg.integer("threads", c.threads));
  c.fit.starts = cfg.integer("starts", c.fit.starts);
  c.fit.max_iterations = cfg.integer("max_iterations", c.fit.max_iterations);
  c.fit.tolerance = cfg.real("tolerance", c.fit.tolerance);
  c.algorithm = cfg.text("algorithm", c.algorithm);

  if (c.kind == ExperimentKind::Custom) {
    const ModelConfig m = parse_model_config(cfg);
    c.custom_models = m.models;
    c.n_sources = static_cast<Index>(m.models.size());
    c.k_datasets = m.k_datasets;
  } else {
    for (const auto& [key, entry] : cfg.entries()) {
      if (key == "sources" || key.rfind("source.", 0) == 0) cfg.fail(key, "'" + key + "' is only used by the custom kind");
    }
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(cfg.origin() + ": " + e.what());
  }
  return c;
}

std::string to_config_text(const ExperimentConfig& c) {
  auto list = [](const auto& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i > 0) s += ", ";
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(xs[i])>>) {
        s += format_double(xs[i]);
      } else {
        s += std::to_string(xs[i]);
      }
    }
    return s;
  };
  std::string out;
  out += "kind = " + to_string(c.kind) + "\n";
  out += "n_sources = " + std::to_string(c.n_sources) + "\n";
  out += "k_datasets = " + std::to_string(c.k_datasets) + "\n";
  out += "v_samples = " + list(c.v_samples) + "\n";
  out += "beta = " + list(c.beta_grid) + "\n";
  out += "beta_candidates = " + list(c.beta_candidates) + "\n";
  out += "ma_order = " + std::to_string(c.ma_order) + "\n";
  out += "lags = " + list(c.lags) + "\n";
  out += "trials = " + std::to_string(c.trials) + "\n";
  out += "seed = " + std::to_string(c.seed) + "\n";
  out += "aggregation = " + to_string(c.aggregation) + "\n";
  out += "out = " + c.out_dir + "\n";
  out += "starts = " + std::to_string(c.fit.starts) + "\n";
  out += "max_iterations = " + std::to_string(c.fit.max_iterations) + "\n";
  out += "tolerance = " + format_double(c.fit.tolerance) + "\n";
  out += "algorithm = " + c.algorithm + "\n";
  return out;
}

std::vector<SourceModel> experiment_models(const ExperimentConfig& c, double grid_value) {
  if (c.kind == ExperimentKind::Custom) return c.custom_models;
  // Model parameters come from stream 0 of the master seed and do not depend
  // on the grid value, so every grid point shares them.
  RngHandle rng(c.seed, 0);
  std::vector<SourceModel> out;
  const Index k = c.k_datasets;
  for (Index n = 0; n < c.n_sources; ++n) {
    if (c.kind == ExperimentKind::JdiagLags) {
      out.push_back(SourceModel::vector_ma(random_ma_taps(k, c.ma_order, rng)));
      continue;
    }
    const Matrix r = c.kind == ExperimentKind::MpeIdentity ? Matrix(Matrix::Identity(k, k)) : random_correlation_matrix(k, rng);
    out.push_back(SourceModel::mpe(grid_value, r / mpe_rho(k, grid_value)));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& c) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> grid = grid_of(c);

  struct Point {
    Index v_index;
    Index v;
    double grid_value;
    std::vector<SourceModel> models;
    Matrix energy;
    double bound;
  };
  std::vector<Point> points;
  std::map<std::pair<Index, double>, double> bound_cache;
  for (std::size_t vi = 0; vi < c.v_samples.size(); ++vi) {
    for (double g : grid) {
      Point p{static_cast<Index>(vi), c.v_samples[vi], g, experiment_models(c, g), Matrix(), 0.0};
      p.energy = energy_of(p.models);
      // JDIAG lag counts share one model, so one bound per sample size.
      const double key = c.kind == ExperimentKind::JdiagLags || std::isnan(g) ? 0.0 : g;
      auto it = bound_cache.find({p.v, key});
      if (it == bound_cache.end()) {
        it = bound_cache.emplace(std::make_pair(p.v, key), bound_report(p.models, p.v).total_normalized).first;
      }
      p.bound = it->second;
      points.push_back(std::move(p));
    }
  }

  const Index n_tasks = static_cast<Index>(points.size()) * c.trials;
  std::vector<TrialRecord> records(static_cast<std::size_t>(n_tasks));
  auto run_task = [&](Index task) {
    const Point& p = points[static_cast<std::size_t>(task / c.trials)];
    const Index trial = task % c.trials;
    TrialRecord rec;
    rec.trial = trial;
    rec.v_samples = p.v;
    rec.grid_value = p.grid_value;
    rec.isr_total_normalized = kNaN;
    rec.isr_pairwise = Matrix::Constant(c.n_sources, c.n_sources, kNaN);
    try {
      // Data depend on (seed, trial, sample size) only.
      RngHandle rng = RngHandle(c.seed, 1).split(static_cast<std::uint64_t>(trial)).split(static_cast<std::uint64_t>(p.v_index));
      std::vector<SourceComponentMatrix> s;
      for (const SourceModel& m : p.models) s.push_back(sample_source(m, p.v, rng));
      const DatasetEnsemble x = mix(std::move(s), MixingSpec{c.n_sources, c.k_datasets}, rng);
      FitResult f;
      const bool jdiag = c.kind == ExperimentKind::JdiagLags || (c.kind == ExperimentKind::Custom && c.algorithm == "jdiag");
      if (jdiag) {
        const Index lags = c.kind == ExperimentKind::JdiagLags ? static_cast<Index>(p.grid_value) : c.lags.front();
        f = fit_jdiag_sos(x, lags, c.fit);
      } else {
        FitOptions opts = c.fit;
        if (c.kind == ExperimentKind::MpeBetaSelect || c.kind == ExperimentKind::Custom) {
          opts.beta_candidates = c.beta_candidates;
        } else {
          opts.beta_candidates = {p.grid_value};
        }
        RngHandle fit_rng = rng.split(1);
        f = fit_iva_mpe(x, opts, fit_rng);
      }
      const TrialOutcome o = evaluate_trial(f.demixing, *x.mixing(), p.energy, p.v);
      rec.success = o.success;
      rec.converged = f.converged;
      rec.iterations = f.iterations;
      rec.isr_total_normalized = o.isr_total_normalized;
      rec.isr_pairwise = o.isr_pairwise;
      rec.selected_beta = f.selected_beta;
    } catch (const std::exception& e) {
      rec.success = false;
      rec.error = e.what();
    }
    records[static_cast<std::size_t>(task)] = std::move(rec);
  };

  const int workers = static_cast<int>(std::min<Index>(c.threads, n_tasks));
  if (workers <= 1) {
    for (Index t = 0; t < n_tasks; ++t) run_task(t);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index t = next++; t < n_tasks; t = next++) run_task(t);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  ExperimentResult out;
  out.config = c;
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    const Point& p = points[pi];
    std::vector<double> successful, all;
    for (Index t = 0; t < c.trials; ++t) {
      const TrialRecord& r = records[pi * static_cast<std::size_t>(c.trials) + static_cast<std::size_t>(t)];
      const double isr = std::isnan(r.isr_total_normalized) ? std::numeric_limits<double>::infinity() : r.isr_total_normalized;
      all.push_back(isr);
      if (r.success) successful.push_back(isr);
    }
    CurvePoint cp;
    cp.v_samples = p.v;
    cp.grid_value = p.grid_value;
    cp.bound = p.bound;
    cp.n_trials = c.trials;
    cp.n_success = static_cast<Index>(successful.size());
    cp.success_rate = static_cast<double>(cp.n_success) / static_cast<double>(c.trials);
    cp.mean_isr = successful.empty() ? kNaN : mean_of(successful);
    cp.mean_isr_stderr = stderr_of(successful);
    cp.median_isr = median_of(all);
    cp.aggregated_isr = c.aggregation == Aggregation::MeanSuccessful ? cp.mean_isr : cp.median_isr;
    out.curve.push_back(cp);
  }
  out.trials = std::move(records);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::string trials_csv(const ExperimentResult& r) {
  const Index n = r.config.n_sources;
  std::string out = "seed,trial,v_samples," + grid_name(r.config.kind) +
                    ",success,converged,iterations,isr_total_normalized";
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      if (a != b) out += ",isr_" + std::to_string(a) + "_" + std::to_string(b);
    }
  }
  out += ",selected_beta,error\n";
  for (const TrialRecord& t : r.trials) {
    out += std::to_string(r.config.seed) + ',' + std::to_string(t.trial) + ',' + std::to_string(t.v_samples) + ',' +
           (std::isnan(t.grid_value) ? std::string() : format_double(t.grid_value)) + ',' +
           (t.success ? "true" : "false") + ',' + (t.converged ? "true" : "false") + ',' + std::to_string(t.iterations) +
           ',' + format_double(t.isr_total_normalized);
    for (Index a = 0; a < n; ++a) {
      for (Index b = 0; b < n; ++b) {
        if (a != b) out += ',' + format_double(t.isr_pairwise(a, b));
      }
    }
    std::string betas;
    for (std::size_t i = 0; i < t.selected_beta.size(); ++i) betas += (i ? " " : "") + format_double(t.selected_beta[i]);
    std::string err = t.error;
    std::replace(err.begin(), err.end(), '"', '\'');
    out += ',' + betas + ',' + (err.empty() ? "" : "\"" + err + "\"") + '\n';
  }
  return out;
}

std::string curve_csv(const ExperimentResult& r) {
  std::string out = "v_samples," + grid_name(r.config.kind) +
                    ",aggregated_isr,bound,success_rate,n_trials,n_success,mean_isr,mean_isr_stderr,median_isr\n";
  for (const CurvePoint& p : r.curve) {
    out += std::to_string(p.v_samples) + ',' + (std::isnan(p.grid_value) ? std::string() : format_double(p.grid_value)) +
           ',' + format_double(p.aggregated_isr) + ',' + format_double(p.bound) + ',' + format_double(p.success_rate) +
           ',' + std::to_string(p.n_trials) + ',' + std::to_string(p.n_success) + ',' + format_double(p.mean_isr) + ',' +
           format_double(p.mean_isr_stderr) + ',' + format_double(p.median_isr) + '\n';
  }
  return out;
}

std::string summary_json(const ExperimentResult& r) {
  using nlohmann::json;
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(format_double(x)); };
  json j;
  const ExperimentConfig& c = r.config;
  j["config"] = {{"kind", to_string(c.kind)},
                 {"n_sources", c.n_sources},
                 {"k_datasets", c.k_datasets},
                 {"v_samples", c.v_samples},
                 {"beta", c.beta_grid},
                 {"beta_candidates", c.beta_candidates},
                 {"ma_order", c.ma_order},
                 {"lags", c.lags},
                 {"trials", c.trials},
                 {"seed", c.seed},
                 {"aggregation", to_string(c.aggregation)},
                 {"starts", c.fit.starts},
                 {"max_iterations", c.fit.max_iterations},
                 {"tolerance", c.fit.tolerance},
                 {"threads", c.threads}};
  if (c.kind == ExperimentKind::Custom) j["config"]["algorithm"] = c.algorithm;
  j["curve"] = json::array();
  for (const CurvePoint& p : r.curve) {
    j["curve"].push_back({{"v_samples", p.v_samples},
                          {grid_name(c.kind), num(p.grid_value)},
                          {"aggregated_isr", num(p.aggregated_isr)},
                          {"bound", num(p.bound)},
                          {"bound_finite", std::isfinite(p.bound)},
                          {"success_rate", p.success_rate},
                          {"n_success", p.n_success},
                          {"mean_isr", num(p.mean_isr)},
                          {"mean_isr_stderr", num(p.mean_isr_stderr)},
                          {"median_isr", num(p.median_isr)}});
  }
  Index errors = 0;
  for (const TrialRecord& t : r.trials) errors += t.error.empty() ? 0 : 1;
  j["trial_errors"] = errors;
  j["wall_clock_seconds"] = r.wall_seconds;
  j["files"] = {"trials.csv", "curve.csv", "isr.svg"};
  return j.dump(2) + "\n";
}

void write_experiment_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "trials.csv", trials_csv(r));
  write_text_file(dir / "curve.csv", curve_csv(r));
  write_text_file(dir / "isr.svg", render_svg(r));
  write_text_file(dir / "summary.json", summary_json(r));
}

}  // namespace jbss
