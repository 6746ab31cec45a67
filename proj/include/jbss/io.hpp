#pragma once

// File formats: ensembles as a sample-per-row CSV plus a JSON sidecar, fit
// results as JSON metadata plus a CSV of the demixing matrices.

#include "jbss/algos.hpp"
#include "jbss/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace jbss {

/// Provenance stored in the ensemble sidecar.
struct EnsembleInfo {
  std::vector<std::string> families;
  std::uint64_t seed = 0;
};

/// Header `c0,...,c{n-1}`, one matrix row per line.
std::string matrix_to_csv(const Matrix& m);
Matrix matrix_from_csv(std::string_view text);

/// Writes `<stem>.csv` (column `x<k>_<n>`, one sample per row), `<stem>.json`
/// and, with ground truth, `<stem>.sources.csv`. Mixing matrices go into the
/// sidecar.
void save_ensemble(const DatasetEnsemble& x, const std::filesystem::path& stem, const EnsembleInfo& info);

/// Reads what save_ensemble wrote; `path` may name the sidecar or the stem.
DatasetEnsemble load_ensemble(const std::filesystem::path& path);

/// Convergence metadata (no matrices).
std::string fit_result_json(const FitResult& r, std::string_view algorithm);

/// Rows `k,row,w0,...,w{N-1}`.
std::string demixing_to_csv(const DemixingEnsemble& w);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace jbss
