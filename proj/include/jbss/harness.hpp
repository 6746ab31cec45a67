#pragma once

// Config-driven Monte-Carlo experiments: key = value config files, model
// descriptions, the trial runner, and CSV / SVG / JSON output.

#include "jbss/algos.hpp"
#include "jbss/core.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace jbss {

// ---------------------------------------------------------------------------
// Config files

/// Raised for malformed config files; the message starts with `origin:line:`.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ConfigEntry {
  std::string value;
  int line = 0;
};

/// Parsed `key = value` lines. `#` starts a comment; keys are unique.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string origin = "config");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

  std::string text(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key, double fallback) const;
  Index integer(const std::string& key, Index fallback) const;
  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback) const;
  /// Comma-separated integers; `a..b` expands to an inclusive range.
  std::vector<Index> integers(const std::string& key, const std::vector<Index>& fallback) const;
  /// Rows separated by `;`, entries by spaces or commas; `identity` is accepted
  /// when `size` is known.
  Matrix matrix(const std::string& key, Index size) const;

  [[noreturn]] void fail(const std::string& key, const std::string& message) const;
  /// Throws on the first key for which `known` returns false.
  template <class Pred>
  void check_keys(Pred known) const {
    for (const auto& [key, entry] : entries_) {
      if (!known(key)) fail(key, "unknown key '" + key + "'");
    }
  }

 private:
  std::string origin_;
  std::map<std::string, ConfigEntry> entries_;
};

// ---------------------------------------------------------------------------
// Model descriptions

/// Sources described by `source.<i>.<field>` keys (`source.*.<field>` applies
/// to every source). Fields: family (gaussian | mpe | ma), beta, covariance,
/// dispersion, taps (`random <L>`), tap.<l>.
struct ModelConfig {
  Index k_datasets = 0;
  Index v_samples = 0;
  std::uint64_t seed = 1;
  std::vector<SourceModel> models;
};

/// Reads the keys `k_datasets`, `v_samples`, `seed`, `sources` and `source.*`.
ModelConfig parse_model_config(const KeyValueConfig& cfg);
bool is_model_key(const std::string& key);

// ---------------------------------------------------------------------------
// Experiments

enum class ExperimentKind { MpeCorrelated, MpeBetaSelect, MpeIdentity, JdiagLags, Custom };
enum class Aggregation { MeanSuccessful, MedianAll };

std::string to_string(ExperimentKind kind);
std::string to_string(Aggregation a);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::MpeCorrelated;
  Index n_sources = 3;
  Index k_datasets = 5;
  std::vector<Index> v_samples{100, 1000, 10000};
  /// True shapes of the simulated sources (MPE kinds).
  std::vector<double> beta_grid{0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0};
  /// Shapes the fit chooses from (beta-select kind, custom IVA).
  std::vector<double> beta_candidates{0.5, 2.0};
  Index ma_order = 4;
  std::vector<Index> lags{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  Index trials = 100;
  std::uint64_t seed = 1;
  Aggregation aggregation = Aggregation::MeanSuccessful;
  std::string out_dir = "out";
  int threads = 1;
  FitOptions fit;
  /// Custom kind: "iva-mpe" or "jdiag".
  std::string algorithm = "iva-mpe";
  std::vector<SourceModel> custom_models;

  void validate() const;
};

/// Applies per-kind defaults, then the keys of `cfg`.
ExperimentConfig parse_experiment_config(const KeyValueConfig& cfg);
/// Canonical `key = value` text for the fields parse_experiment_config reads
/// (custom source models excluded).
std::string to_config_text(const ExperimentConfig& c);

struct TrialRecord {
  Index trial = 0;
  Index v_samples = 0;
  /// beta for MPE kinds, lag count for JDIAG, NaN for custom runs.
  double grid_value = 0.0;
  bool success = false;
  bool converged = false;
  Index iterations = 0;
  /// NaN when the trial raised.
  double isr_total_normalized = 0.0;
  /// Off-diagonal ISR_{m,n} summed over datasets.
  Matrix isr_pairwise;
  std::vector<double> selected_beta;
  std::string error;
};

struct CurvePoint {
  Index v_samples = 0;
  double grid_value = 0.0;
  double aggregated_isr = 0.0;
  double bound = 0.0;
  double success_rate = 0.0;
  Index n_trials = 0;
  Index n_success = 0;
  /// Over successful trials.
  double mean_isr = 0.0;
  double mean_isr_stderr = 0.0;
  /// Over all trials; a failed fit counts as +inf.
  double median_isr = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialRecord> trials;
  std::vector<CurvePoint> curve;
  double wall_seconds = 0.0;
};

/// Source models used at one grid point (drawn from the master seed once).
std::vector<SourceModel> experiment_models(const ExperimentConfig& c, double grid_value);

ExperimentResult run_experiment(const ExperimentConfig& c);

std::string trials_csv(const ExperimentResult& r);
std::string curve_csv(const ExperimentResult& r);
std::string summary_json(const ExperimentResult& r);
std::string render_svg(const ExperimentResult& r);

/// trials.csv, curve.csv, isr.svg and summary.json under `dir`.
void write_experiment_outputs(const ExperimentResult& r, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Self test

/// Quick oracle checks; one line per check. Returns the number of failures.
int run_selftest(std::ostream& os);

}  // namespace jbss
