#pragma once

#include "hml/analysis.hpp"
#include "hml/fitting.hpp"
#include "hml/model.hpp"
#include "hml/synergy.hpp"
#include "hml/task.hpp"
#include "hml/theory.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hml {

using Json = nlohmann::json;

const char* version();

// --- numbers and files -------------------------------------------------------------

// Shortest decimal that parses back to the same double; "nan", "inf", "-inf" otherwise.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string file_sha256(const std::filesystem::path& path);

// --- CSV ------------------------------------------------------------------------------

// Comma-separated numeric table with a mandatory header row. Errors carry 1-based
// line and column numbers.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const;  // throws ParseError
};

NumericTable parse_numeric_csv(std::string_view text, const std::string& source);

// First column time, remaining columns one joint each.
PostureSeries parse_postures_csv(std::string_view text, const std::string& source);
std::string postures_csv(const PostureSeries& postures);

// session, trial, re, sot, fme, speed, accuracy, driving_effort, exploratory_effort, captured
std::string metrics_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_metrics_csv(std::string_view text, const std::string& source);

// time, x1..xn, e1..en, u1..um, fme; every `stride`-th sample plus the last one.
std::string trajectory_csv(const TrialRecord& trial, const Environment& env, std::size_t stride = 1);

// value, trial, then mean/lo/hi/count per aggregated metric.
std::string sweep_csv(const SweepResult& result);
std::string satisficing_csv(const SatisficingResult& result);
std::string flexibility_csv(const FlexibilityResult& result);

// Reshapes any of the tables above (or metrics.csv) into long format:
// every non-key column becomes rows of (key columns..., variable, value).
std::string long_format_csv(const NumericTable& table, const std::vector<std::string>& keys);

// --- JSON -----------------------------------------------------------------------------

Json matrix_to_json(const Matrix& a);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

// Flat object keyed by parameter name; missing keys keep their defaults.
Json to_json(const ModelParams& p);
ModelParams params_from_json(const Json& j);

Json to_json(const TaskConfig& c);
TaskConfig task_config_from_json(const Json& j);

struct CalibrationBundle {
  PcaResult pca;
  MappingMatrix mapping;
  SynergyBasis synergies;

  Environment environment() const { return Environment::make(mapping, synergies); }
};

Json to_json(const CalibrationBundle& b);
CalibrationBundle calibration_from_json(const Json& j);

Json to_json(const FitSummary& s);
FitSummary fit_summary_from_json(const Json& j);

Json to_json(const ConvergenceReport& r);
ConvergenceReport convergence_report_from_json(const Json& j);

// Canonical text for persisted JSON (2-space indent, trailing newline).
std::string dump_json(const Json& j);
Json parse_json(std::string_view text, const std::string& source);

// --- run manifests ------------------------------------------------------------------

struct RunManifest {
  std::vector<std::string> command_line;
  Json config;
  std::uint64_t seed = 0;
  std::string version;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  double duration_seconds = 0.0;
};

Json to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);

// Recomputes the hashes of every listed file; returns the paths whose content differs
// or which are missing.
std::vector<std::string> verify_manifest(const RunManifest& m);

// --- experiment directories ---------------------------------------------------------

// config.json, params.json, metrics.csv and, when trajectories were kept,
// trajectories/s<session>_t<trial>.csv. Returns the written paths.
std::vector<std::filesystem::path> save_experiment(const std::filesystem::path& dir, const ExperimentRecord& rec,
                                                   const Environment& env, std::size_t stride = 1);

}  // namespace hml
