#include "jbss/io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace jbss {

namespace {

using nlohmann::json;

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (std::string_view line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("line " + std::to_string(line) + ": not a number: '" + std::string(s) + "'");
  }
  return v;
}

// Numeric body of a CSV with one header line.
Matrix parse_table(std::string_view text, Index expected_cols) {
  const std::vector<std::string_view> lines = lines_of(text);
  if (lines.empty()) throw Error("empty CSV");
  const Index cols = static_cast<Index>(split(lines.front(), ',').size());
  if (expected_cols > 0 && cols != expected_cols) throw Error("CSV has the wrong number of columns");
  Matrix out(static_cast<Index>(lines.size()) - 1, cols);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (static_cast<Index>(fields.size()) != cols) {
      throw Error("line " + std::to_string(i + 1) + ": expected " + std::to_string(cols) + " fields");
    }
    for (Index c = 0; c < cols; ++c) out(static_cast<Index>(i) - 1, c) = parse_double(fields[static_cast<std::size_t>(c)], i + 1);
  }
  return out;
}

std::string stacked_csv(const std::vector<Matrix>& blocks, char prefix) {
  const Index n = blocks.front().rows();
  const Index v = blocks.front().cols();
  std::string out;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    for (Index r = 0; r < n; ++r) {
      if (k + r > 0) out += ',';
      out += prefix + std::to_string(k) + '_' + std::to_string(r);
    }
  }
  out += '\n';
  for (Index c = 0; c < v; ++c) {
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      for (Index r = 0; r < n; ++r) {
        if (k + r > 0) out += ',';
        out += format_double(blocks[k](r, c));
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<Matrix> unstack(const Matrix& table, Index k, Index n) {
  std::vector<Matrix> out;
  for (Index kk = 0; kk < k; ++kk) out.push_back(table.middleCols(kk * n, n).transpose());
  return out;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const Index rows = static_cast<Index>(j.size());
  const Index cols = rows > 0 ? static_cast<Index>(j.front().size()) : 0;
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    if (static_cast<Index>(j[static_cast<std::size_t>(r)].size()) != cols) throw Error("ragged matrix in sidecar");
    for (Index c = 0; c < cols; ++c) m(r, c) = j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const std::string& suffix) {
  return stem.parent_path() / (stem.filename().string() + suffix);
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (Index c = 0; c < m.cols(); ++c) {
    if (c > 0) out += ',';
    out += 'c' + std::to_string(c);
  }
  out += '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

Matrix matrix_from_csv(std::string_view text) { return parse_table(text, 0); }

void save_ensemble(const DatasetEnsemble& x, const std::filesystem::path& stem, const EnsembleInfo& info) {
  json side;
  side["format"] = "jbss-ensemble-1";
  side["n_sources"] = x.n_sources();
  side["k_datasets"] = x.k_datasets();
  side["v_samples"] = x.v_samples();
  side["families"] = info.families;
  side["seed"] = info.seed;
  side["data"] = with_suffix(stem, ".csv").filename().string();
  write_text_file(with_suffix(stem, ".csv"), stacked_csv(x.observations(), 'x'));
  if (x.mixing()) {
    json mix = json::array();
    for (const Matrix& a : *x.mixing()) mix.push_back(matrix_json(a));
    side["mixing"] = mix;
  }
  if (x.sources()) {
    std::vector<Matrix> s;
    for (Index k = 0; k < x.k_datasets(); ++k) s.push_back(x.source_matrix(k));
    side["sources"] = with_suffix(stem, ".sources.csv").filename().string();
    write_text_file(with_suffix(stem, ".sources.csv"), stacked_csv(s, 's'));
  }
  write_text_file(with_suffix(stem, ".json"), side.dump(2) + "\n");
}

DatasetEnsemble load_ensemble(const std::filesystem::path& path) {
  std::filesystem::path stem = path;
  if (stem.extension() == ".json" || stem.extension() == ".csv") stem.replace_extension();
  json side;
  try {
    side = json::parse(read_text_file(with_suffix(stem, ".json")));
  } catch (const json::exception& e) {
    throw Error("bad ensemble sidecar: " + std::string(e.what()));
  }
  const Index n = side.at("n_sources").get<Index>();
  const Index k = side.at("k_datasets").get<Index>();
  const Index v = side.at("v_samples").get<Index>();
  const std::filesystem::path dir = stem.parent_path();
  const Matrix table = parse_table(read_text_file(dir / side.at("data").get<std::string>()), n * k);
  if (table.rows() != v) throw Error("ensemble CSV has the wrong number of samples");
  std::optional<std::vector<Matrix>> mixing;
  if (side.contains("mixing")) {
    mixing.emplace();
    for (const json& a : side["mixing"]) mixing->push_back(matrix_from_json(a));
  }
  std::optional<std::vector<SourceComponentMatrix>> sources;
  if (side.contains("sources")) {
    const std::vector<Matrix> s = unstack(parse_table(read_text_file(dir / side["sources"].get<std::string>()), n * k), k, n);
    sources.emplace();
    for (Index i = 0; i < n; ++i) {
      Matrix scm(k, v);
      for (Index kk = 0; kk < k; ++kk) scm.row(kk) = s[static_cast<std::size_t>(kk)].row(i);
      sources->emplace_back(std::move(scm));
    }
  }
  return DatasetEnsemble(unstack(table, k, n), std::move(mixing), std::move(sources));
}

std::string fit_result_json(const FitResult& r, std::string_view algorithm) {
  json j;
  j["algorithm"] = std::string(algorithm);
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["restarts_used"] = r.restarts_used;
  j["selected_beta"] = r.selected_beta;
  j["final_objective"] = r.objective_trace.empty() ? json(nullptr) : json(r.objective_trace.back());
  j["objective_trace"] = r.objective_trace;
  return j.dump(2) + "\n";
}

std::string demixing_to_csv(const DemixingEnsemble& w) {
  const Index n = w.n_sources();
  std::string out = "k,row";
  for (Index c = 0; c < n; ++c) out += ",w" + std::to_string(c);
  out += '\n';
  for (Index k = 0; k < w.k_datasets(); ++k) {
    for (Index r = 0; r < n; ++r) {
      out += std::to_string(k) + ',' + std::to_string(r);
      for (Index c = 0; c < n; ++c) out += ',' + format_double(w[k](r, c));
      out += '\n';
    }
  }
  return out;
}

}  // namespace jbss
