// jbss: command-line front end for ensemble generation, fitting, bounds,
// identifiability checks and Monte-Carlo experiments.

#include "jbss/bounds.hpp"
#include "jbss/harness.hpp"
#include "jbss/ident.hpp"
#include "jbss/io.hpp"
#include "jbss/metrics.hpp"
#include "jbss/score.hpp"
#include "jbss/sources.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

using namespace jbss;

namespace {

ModelConfig load_models(const std::string& path, std::optional<std::uint64_t> seed) {
  KeyValueConfig cfg = KeyValueConfig::load(path);
  cfg.check_keys([](const std::string& key) { return is_model_key(key); });
  if (!seed) return parse_model_config(cfg);
  // Random covariances and taps follow the command-line seed.
  std::string text;
  for (const auto& [key, entry] : cfg.entries()) {
    if (key != "seed") text += key + " = " + entry.value + "\n";
  }
  text += "seed = " + std::to_string(*seed) + "\n";
  return parse_model_config(KeyValueConfig::parse(text, path));
}

std::vector<std::string> families_of(const std::vector<SourceModel>& models) {
  std::vector<std::string> out;
  for (const SourceModel& m : models) out.push_back(to_string(m.family()));
  return out;
}

int cmd_gen(const std::string& config, std::optional<std::uint64_t> seed, std::optional<Index> v,
            const std::string& out) {
  const ModelConfig m = load_models(config, seed);
  const Index samples = v.value_or(m.v_samples);
  RngHandle rng(m.seed, 1);
  std::vector<SourceComponentMatrix> s;
  for (const SourceModel& model : m.models) s.push_back(sample_source(model, samples, rng));
  const DatasetEnsemble x = mix(std::move(s), MixingSpec{static_cast<Index>(m.models.size()), m.k_datasets}, rng);
  save_ensemble(x, out, EnsembleInfo{families_of(m.models), m.seed});
  std::cout << "wrote " << out << ".csv, " << out << ".sources.csv and " << out << ".json (N=" << x.n_sources()
            << ", K=" << x.k_datasets() << ", V=" << x.v_samples() << ")\n";
  return 0;
}

int cmd_fit(const std::string& input, const std::string& algo, const std::vector<double>& betas, Index lags,
            Index starts, std::uint64_t seed, const std::string& out) {
  const DatasetEnsemble x = load_ensemble(input);
  FitOptions opts;
  opts.starts = starts;
  FitResult f;
  if (algo == "jdiag") {
    f = fit_jdiag_sos(x, lags, opts);
  } else if (algo == "iva-mpe") {
    opts.beta_candidates = betas;
    RngHandle rng(seed, 2);
    f = fit_iva_mpe(x, opts, rng);
  } else {
    throw Error("unknown algorithm '" + algo + "' (iva-mpe, jdiag)");
  }
  write_text_file(out + ".json", fit_result_json(f, algo));
  write_text_file(out + ".csv", demixing_to_csv(f.demixing));
  std::cout << algo << ": converged=" << (f.converged ? "true" : "false") << " iterations=" << f.iterations << "\n";
  if (x.mixing()) {
    Matrix energy = Matrix::Ones(x.n_sources(), x.k_datasets());
    if (x.sources()) {
      for (Index n = 0; n < x.n_sources(); ++n) {
        const Matrix& s = (*x.sources())[static_cast<std::size_t>(n)].data();
        energy.row(n) = (s.rowwise().squaredNorm() / static_cast<double>(s.cols())).transpose();
      }
    }
    const TrialOutcome o = evaluate_trial(f.demixing, *x.mixing(), energy, x.v_samples());
    std::cout << "success=" << (o.success ? "true" : "false") << " normalized ISR=" << format_double(o.isr_total_normalized)
              << "\n";
  }
  std::cout << "wrote " << out << ".json and " << out << ".csv\n";
  return 0;
}

int cmd_bound(const std::string& config, std::optional<Index> v, bool csv) {
  const ModelConfig m = load_models(config, std::nullopt);
  const BoundReport r = bound_report(m.models, v.value_or(m.v_samples));
  if (csv) {
    std::cout << r.to_csv();
    return 0;
  }
  std::cout << "regime: " << to_string(r.regime) << ", V=" << r.v_samples << "\n";
  const Index n = r.pairwise.rows();
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      if (a == b) continue;
      std::cout << "  ISR bound (" << a << "," << b << "): "
                << (r.finite(a, b) ? format_double(r.pairwise(a, b)) : std::string("+inf (nonidentifiable)")) << "\n";
    }
  }
  for (const std::string& d : r.diagnoses) std::cout << "  note: " << d << "\n";
  if (r.all_finite()) {
    std::cout << "total normalized ISR bound: " << format_double(r.total_normalized) << "\n";
  } else {
    std::cout << "total normalized ISR bound: +inf (nonidentifiable)\n";
  }
  return 0;
}

int cmd_ident(const std::string& config, std::optional<Index> v) {
  const ModelConfig m = load_models(config, std::nullopt);
  const bool iid = std::all_of(m.models.begin(), m.models.end(), [](const SourceModel& s) { return s.is_iid(); });
  const IdentVerdict verdict =
      iid ? check_iva_identifiability_iid(m.models) : check_iva_identifiability_general(m.models, v.value_or(m.v_samples));
  std::cout << verdict.to_json() << "\n";
  return 0;
}

int cmd_experiment(const std::string& config, std::optional<std::uint64_t> seed, std::optional<Index> trials,
                   std::optional<std::string> out, std::optional<int> threads) {
  ExperimentConfig c = parse_experiment_config(KeyValueConfig::load(config));
  if (seed) c.seed = *seed;
  if (trials) c.trials = *trials;
  if (out) c.out_dir = *out;
  if (threads) c.threads = *threads;
  c.validate();
  const ExperimentResult r = run_experiment(c);
  write_experiment_outputs(r, c.out_dir);
  std::cout << "kind=" << to_string(c.kind) << " trials=" << c.trials << " seed=" << c.seed << " ("
            << format_double(std::round(r.wall_seconds * 10.0) / 10.0) << " s)\n";
  std::cout << curve_csv(r);
  std::cout << "outputs in " << c.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint blind source separation: ensembles, IVA fits, Cramer-Rao bounds and experiments"};
  app.require_subcommand(1);

  std::string config, input, out, algo = "iva-mpe";
  std::optional<std::uint64_t> seed;
  std::optional<Index> trials, v;
  std::optional<std::string> out_opt;
  std::optional<int> threads;
  std::vector<double> betas{1.0};
  Index lags = 1, starts = 1;
  bool csv = false;

  CLI::App* gen = app.add_subcommand("gen", "Draw an ensemble from a model config and write it to files");
  gen->add_option("--config", config, "Model config file")->required();
  gen->add_option("--seed", seed, "Seed for model parameters and data");
  gen->add_option("--v", v, "Samples per dataset (overrides v_samples)");
  gen->add_option("--out", out, "Output stem")->required();

  CLI::App* fit = app.add_subcommand("fit", "Run a separation algorithm on an ensemble file");
  fit->add_option("--input", input, "Ensemble stem or sidecar")->required();
  fit->add_option("--algo", algo, "iva-mpe or jdiag");
  fit->add_option("--beta", betas, "Shape candidates for iva-mpe")->delimiter(',');
  fit->add_option("--lags", lags, "Lag count for jdiag");
  fit->add_option("--starts", starts, "Starting points for iva-mpe");
  fit->add_option("--seed", seed, "Seed for random starting points");
  fit->add_option("--out", out, "Output stem")->required();

  CLI::App* bound = app.add_subcommand("bound", "Print the ISR bound report for a model config");
  bound->add_option("--config", config, "Model config file")->required();
  bound->add_option("--v", v, "Samples per dataset (overrides v_samples)");
  bound->add_flag("--csv", csv, "Print the report as CSV");

  CLI::App* ident = app.add_subcommand("ident", "Print the identifiability verdict for a model config as JSON");
  ident->add_option("--config", config, "Model config file")->required();
  ident->add_option("--v", v, "Samples per dataset for sample-dependent models");

  CLI::App* exp = app.add_subcommand("experiment", "Run a Monte-Carlo experiment from a config file");
  exp->add_option("--config", config, "Experiment config file")->required();
  exp->add_option("--seed", seed, "Master seed (overrides the config)");
  exp->add_option("--trials", trials, "Trial count (overrides the config)")->check(CLI::PositiveNumber);
  exp->add_option("--out", out_opt, "Output directory (overrides the config)");
  exp->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  CLI::App* self = app.add_subcommand("selftest", "Run the built-in oracle checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(config, seed, v, out);
    if (*fit) return cmd_fit(input, algo, betas, lags, starts, seed.value_or(1), out);
    if (*bound) return cmd_bound(config, v, csv);
    if (*ident) return cmd_ident(config, v);
    if (*exp) return cmd_experiment(config, seed, trials, out_opt, threads);
    if (*self) return run_selftest(std::cout) == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
