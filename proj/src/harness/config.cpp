#include "jbss/harness.hpp"
#include "jbss/io.hpp"
#include "jbss/score.hpp"
#include "jbss/sources.hpp"

#include <charconv>
#include <set>

namespace jbss {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_any(std::string_view s, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t pos = s.find_first_of(seps, start);
    const std::string_view tok = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!tok.empty()) out.push_back(tok);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> to_real(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<Index> to_integer(std::string_view s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return static_cast<Index>(v);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string origin) {
  KeyValueConfig cfg;
  cfg.origin_ = std::move(origin);
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = cfg.origin_ + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (value.empty()) throw ConfigError(where + "missing value for '" + key + "'");
    if (cfg.entries_.count(key)) {
      throw ConfigError(where + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(cfg.entries_[key].line) + ")");
    }
    cfg.entries_[key] = ConfigEntry{value, line_no};
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

void KeyValueConfig::fail(const std::string& key, const std::string& message) const {
  const auto it = entries_.find(key);
  const std::string line = it == entries_.end() ? "" : std::to_string(it->second.line) + ":";
  throw ConfigError(origin_ + ":" + line + " " + message);
}

std::string KeyValueConfig::text(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second.value;
}

double KeyValueConfig::real(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto v = to_real(it->second.value);
  if (!v) fail(key, "'" + key + "' must be a number");
  return *v;
}

Index KeyValueConfig::integer(const std::string& key, Index fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const auto v = to_integer(it->second.value);
  if (!v) fail(key, "'" + key + "' must be an integer");
  return *v;
}

std::vector<double> KeyValueConfig::reals(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (std::string_view tok : split_any(it->second.value, ",")) {
    const auto v = to_real(tok);
    if (!v) fail(key, "'" + key + "' must be a comma-separated list of numbers");
    out.push_back(*v);
  }
  return out;
}

std::vector<Index> KeyValueConfig::integers(const std::string& key, const std::vector<Index>& fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<Index> out;
  for (std::string_view tok : split_any(it->second.value, ",")) {
    if (const auto dots = tok.find(".."); dots != std::string_view::npos) {
      const auto a = to_integer(trim(tok.substr(0, dots)));
      const auto b = to_integer(trim(tok.substr(dots + 2)));
      if (!a || !b || *b < *a) fail(key, "bad range '" + std::string(tok) + "' in '" + key + "'");
      for (Index i = *a; i <= *b; ++i) out.push_back(i);
      continue;
    }
    const auto v = to_integer(tok);
    if (!v) fail(key, "'" + key + "' must be a comma-separated list of integers");
    out.push_back(*v);
  }
  return out;
}

Matrix KeyValueConfig::matrix(const std::string& key, Index size) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "missing '" + key + "'");
  const std::string& value = it->second.value;
  if (value == "identity") {
    if (size < 1) fail(key, "'identity' needs a known size for '" + key + "'");
    return Matrix::Identity(size, size);
  }
  std::vector<std::vector<double>> rows;
  for (std::string_view row : split_any(value, ";")) {
    std::vector<double> r;
    for (std::string_view tok : split_any(row, " ,\t")) {
      const auto v = to_real(tok);
      if (!v) fail(key, "'" + key + "': not a number: '" + std::string(tok) + "'");
      r.push_back(*v);
    }
    rows.push_back(std::move(r));
  }
  const Index n = static_cast<Index>(rows.size());
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    if (static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) != n) fail(key, "'" + key + "' must be square");
    for (Index j = 0; j < n; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  if (size > 0 && n != size) fail(key, "'" + key + "' must be " + std::to_string(size) + " x " + std::to_string(size));
  return m;
}

// ---------------------------------------------------------------------------

bool is_model_key(const std::string& key) {
  return key == "k_datasets" || key == "v_samples" || key == "seed" || key == "sources" || key.rfind("source.", 0) == 0;
}

ModelConfig parse_model_config(const KeyValueConfig& cfg) {
  ModelConfig out;
  out.k_datasets = cfg.integer("k_datasets", 0);
  if (out.k_datasets < 1) cfg.fail("k_datasets", "'k_datasets' must be a positive integer");
  out.v_samples = cfg.has("v_samples") ? cfg.integers("v_samples", {}).front() : 1000;
  if (out.v_samples < 2) cfg.fail("v_samples", "'v_samples' must be at least 2");
  const Index seed = cfg.integer("seed", 1);
  if (seed < 0) cfg.fail("seed", "'seed' must be non-negative");
  out.seed = static_cast<std::uint64_t>(seed);

  std::set<Index> indices;
  for (const auto& [key, entry] : cfg.entries()) {
    if (key.rfind("source.", 0) != 0) continue;
    const std::string rest = key.substr(7);
    const std::string head = rest.substr(0, rest.find('.'));
    if (head == "*") continue;
    const auto idx = to_integer(head);
    if (!idx || *idx < 0) cfg.fail(key, "bad source index in '" + key + "'");
    indices.insert(*idx);
  }
  Index n = cfg.integer("sources", indices.empty() ? 0 : *indices.rbegin() + 1);
  if (n < 1) cfg.fail("sources", "no sources given");
  if (!indices.empty() && *indices.rbegin() >= n) cfg.fail("sources", "source index exceeds 'sources'");

  const Index k = out.k_datasets;
  RngHandle rng(out.seed, 0);
  static const std::set<std::string> kFields{"family", "beta", "covariance", "dispersion", "taps"};
  for (const auto& [key, entry] : cfg.entries()) {
    if (key.rfind("source.", 0) != 0) continue;
    const std::string rest = key.substr(7);
    const auto dot = rest.find('.');
    const std::string field = dot == std::string::npos ? "" : rest.substr(dot + 1);
    if (!kFields.count(field) && field.rfind("tap.", 0) != 0) cfg.fail(key, "unknown key '" + key + "'");
  }

  for (Index i = 0; i < n; ++i) {
    const std::string own = "source." + std::to_string(i) + ".";
    auto key_of = [&](const std::string& field) {
      return cfg.has(own + field) ? own + field : "source.*." + field;
    };
    const std::string family = cfg.text(key_of("family"), "");
    if (family.empty()) cfg.fail(key_of("family"), "missing '" + own + "family'");
    auto spd = [&](const std::string& field) -> Matrix {
      const std::string key = key_of(field);
      if (cfg.text(key, "") == "random") return random_correlation_matrix(k, rng);
      const Matrix m = cfg.matrix(key, k);
      try {
        require_spd(m, field);
      } catch (const Error& e) {
        cfg.fail(key, e.what());
      }
      return m;
    };
    try {
      if (family == "gaussian") {
        out.models.push_back(SourceModel::gaussian(spd("covariance")));
      } else if (family == "mpe") {
        const double beta = cfg.real(key_of("beta"), 0.0);
        if (!(beta > 0.0)) cfg.fail(key_of("beta"), "'" + own + "beta' must be positive");
        if (cfg.has(key_of("dispersion")) == cfg.has(key_of("covariance"))) {
          cfg.fail(key_of("family"), "give exactly one of '" + own + "dispersion' and '" + own + "covariance'");
        }
        const Matrix disp = cfg.has(key_of("dispersion")) ? spd("dispersion") : Matrix(spd("covariance") / mpe_rho(k, beta));
        out.models.push_back(SourceModel::mpe(beta, disp));
      } else if (family == "ma") {
        std::vector<Matrix> taps;
        if (cfg.has(key_of("taps"))) {
          const std::string spec = cfg.text(key_of("taps"), "");
          const auto parts = split_any(spec, " ");
          const auto order = parts.size() == 2 && parts[0] == "random" ? to_integer(parts[1]) : std::nullopt;
          if (!order || *order < 1) cfg.fail(key_of("taps"), "'" + own + "taps' must be 'random <L>'");
          taps = random_ma_taps(k, *order, rng);
        } else {
          for (Index l = 0; cfg.has(key_of("tap." + std::to_string(l))); ++l) {
            taps.push_back(cfg.matrix(key_of("tap." + std::to_string(l)), k));
          }
          if (taps.empty()) cfg.fail(key_of("family"), "MA source " + std::to_string(i) + " needs 'taps' or 'tap.0'");
        }
        out.models.push_back(SourceModel::vector_ma(std::move(taps)));
      } else {
        cfg.fail(key_of("family"), "unknown family '" + family + "' (gaussian, mpe, ma)");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      cfg.fail(key_of("family"), std::string("source ") + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace jbss
