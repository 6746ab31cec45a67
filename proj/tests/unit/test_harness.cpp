#include "jbss/harness.hpp"
#include "jbss/bounds.hpp"
#include "jbss/score.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

using namespace jbss;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_experiment_config(KeyValueConfig::parse(text, "t.cfg"));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

ExperimentConfig small_jdiag(Index trials) {
  return parse_experiment_config(KeyValueConfig::parse(
      "kind = jdiag-lags\nv_samples = 300\nlags = 1..3\nma_order = 2\ntrials = " + std::to_string(trials) + "\nseed = 4\n",
      "t.cfg"));
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config parser reports line numbers") {
  CHECK(error_of("kind = jdiag-lags\n\n# comment\nbogus = 1\n").find("t.cfg:4:") != std::string::npos);
  CHECK(error_of("kind = jdiag-lags\nno equals sign\n").find("t.cfg:2:") != std::string::npos);
  const std::string dup = error_of("kind = jdiag-lags\ntrials = 3\ntrials = 4\n");
  CHECK(dup.find("t.cfg:3:") != std::string::npos);
  CHECK(dup.find("line 2") != std::string::npos);
  CHECK(error_of("kind = jdiag-lags\ntrials = many\n").find("t.cfg:2:") != std::string::npos);
  CHECK(error_of("kind = jdiag-lags\nlags = 5..2\n").find("bad range") != std::string::npos);
}

TEST_CASE("config validation rejects impossible experiments") {
  CHECK(!error_of("kind = mpe-correlated\nn_sources = 1\n").empty());
  CHECK(!error_of("kind = mpe-correlated\nbeta = 0, 1\n").empty());
  CHECK(!error_of("kind = mpe-correlated\nv_samples = 3\n").empty());
  CHECK(!error_of("kind = jdiag-lags\nlags = 0..2\n").empty());
  CHECK(!error_of("kind = mpe-correlated\nsource.0.family = gaussian\n").empty());
  CHECK(!error_of("kind = nonsense\n").empty());
  CHECK(!error_of("kind = mpe-correlated\naggregation = max\n").empty());
  CHECK(error_of("kind = mpe-correlated\n").empty());
}

TEST_CASE("kind-specific defaults") {
  const ExperimentConfig j = small_jdiag(1);
  CHECK(j.k_datasets == 3);
  CHECK(j.lags == std::vector<Index>{1, 2, 3});
  const ExperimentConfig id = parse_experiment_config(KeyValueConfig::parse("kind = mpe-identity\n", "t.cfg"));
  CHECK(id.aggregation == Aggregation::MedianAll);
  CHECK(id.beta_grid.size() == 7);
}

TEST_CASE("config text round trips") {
  const ExperimentConfig a = small_jdiag(7);
  const ExperimentConfig b = parse_experiment_config(KeyValueConfig::parse(to_config_text(a), "rt.cfg"));
  CHECK(to_config_text(a) == to_config_text(b));
}

TEST_CASE("model config builds sources and checks matrices") {
  const ModelConfig m = parse_model_config(KeyValueConfig::parse(
      "k_datasets = 2\nsource.0.family = gaussian\nsource.0.covariance = 1 0.3; 0.3 1\n"
      "source.1.family = mpe\nsource.1.beta = 2\nsource.1.covariance = identity\n"
      "source.2.family = ma\nsource.2.tap.0 = identity\nsource.2.tap.1 = 0.5 0; 0 0.2\n",
      "m.cfg"));
  REQUIRE(m.models.size() == 3);
  CHECK(m.models[0].family() == SourceFamily::GaussianScv);
  CHECK(m.models[1].family() == SourceFamily::MpeScv);
  CHECK(m.models[2].family() == SourceFamily::VectorMaGaussian);
  CHECK((marginal_covariance(m.models[1]) - Matrix::Identity(2, 2)).norm() < 1e-10);

  auto fails = [](const std::string& text) {
    try {
      parse_model_config(KeyValueConfig::parse(text, "m.cfg"));
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(fails("k_datasets = 2\nsource.0.family = gaussian\nsource.0.covariance = 1 2; 2 1\n").find("m.cfg:3:") !=
        std::string::npos);
  CHECK(!fails("k_datasets = 2\nsource.0.family = gaussian\nsource.0.covariance = 1 0; 0 1; 0 0\n").empty());
  CHECK(!fails("k_datasets = 2\nsource.0.family = mpe\nsource.0.covariance = identity\n").empty());
  CHECK(!fails("k_datasets = 2\nsource.0.family = laplace\n").empty());
  CHECK(!fails("k_datasets = 2\nsource.0.family = gaussian\nsource.0.covariance = identity\nsource.0.colour = red\n").empty());
}

TEST_CASE("wildcard source fields apply to every source") {
  const ModelConfig m = parse_model_config(
      KeyValueConfig::parse("k_datasets = 3\nsources = 4\nsource.*.family = gaussian\nsource.*.covariance = random\n"
                            "source.2.covariance = identity\n",
                            "m.cfg"));
  REQUIRE(m.models.size() == 4);
  CHECK((marginal_covariance(m.models[2]) - Matrix::Identity(3, 3)).norm() == 0.0);
  CHECK((marginal_covariance(m.models[0]) - marginal_covariance(m.models[1])).norm() > 1e-3);
}

TEST_CASE("experiments are deterministic and independent of thread count") {
  ExperimentConfig c = small_jdiag(3);
  c.threads = 1;
  const ExperimentResult a = run_experiment(c);
  c.threads = 3;
  const ExperimentResult b = run_experiment(c);
  CHECK(trials_csv(a) == trials_csv(b));
  CHECK(curve_csv(a) == curve_csv(b));
  CHECK(render_svg(a) == render_svg(b));
}

TEST_CASE("one curve row per grid point and the aggregate is recomputable") {
  const ExperimentResult r = run_experiment(small_jdiag(4));
  CHECK(lines_of(curve_csv(r)).size() == 1 + 3);
  CHECK(lines_of(trials_csv(r)).size() == 1 + 3 * 4);
  for (const CurvePoint& p : r.curve) {
    double sum = 0.0;
    Index count = 0;
    for (const TrialRecord& t : r.trials) {
      if (t.grid_value != p.grid_value || !t.success) continue;
      sum += t.isr_total_normalized;
      ++count;
    }
    CHECK(count == p.n_success);
    CHECK(p.aggregated_isr == doctest::Approx(sum / static_cast<double>(count)).epsilon(1e-12));
    CHECK(std::isfinite(p.bound));
  }
}

TEST_CASE("median aggregation counts errored fits as infinite") {
  ExperimentConfig c = parse_experiment_config(
      KeyValueConfig::parse("kind = mpe-identity\nv_samples = 200\nbeta = 1\ntrials = 3\nmax_iterations = 1\n", "t.cfg"));
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.curve.size() == 1);
  CHECK(std::isinf(r.curve[0].bound));
  std::vector<double> isr;
  for (const TrialRecord& t : r.trials) isr.push_back(std::isnan(t.isr_total_normalized) ? std::numeric_limits<double>::infinity() : t.isr_total_normalized);
  std::sort(isr.begin(), isr.end());
  CHECK(r.curve[0].median_isr == isr[1]);
  CHECK(render_svg(r).find(">inf<") != std::string::npos);
}

TEST_CASE("selftest passes") {
  std::ostringstream os;
  CHECK(run_selftest(os) == 0);
  CHECK(os.str().find("FAIL") == std::string::npos);
}
