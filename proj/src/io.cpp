#include "hml/io.hpp"

#include "hml/error.hpp"
#include "hml/hash.hpp"
#include "hml/metrics.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <system_error>

#ifndef HML_VERSION
#define HML_VERSION "0.0.0"
#endif

namespace hml {

namespace fs = std::filesystem;

const char* version() { return HML_VERSION; }

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr);
  std::string out;
  out.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    out += buf;
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create directory '" + path.parent_path().string() + "'");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::IoError, "failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot move '" + tmp.string() + "' to '" + path.string() + "'");
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

// --- CSV ------------------------------------------------------------------------------

std::size_t NumericTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ParseError("header", 1, 1, "missing column '" + std::string(name) + "'");
}

namespace {

struct Line {
  std::string_view text;
  std::size_t number;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  std::size_t pos = 0, number = 1;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back({line, number});
    pos = end + 1;
    ++number;
  }
  while (!lines.empty() && lines.back().text.empty()) lines.pop_back();
  return lines;
}

// Cells of one line with their 1-based starting columns.
std::vector<std::pair<std::string_view, std::size_t>> split_cells(std::string_view line) {
  std::vector<std::pair<std::string_view, std::size_t>> cells;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t end = line.find(',', pos);
    const std::size_t stop = end == std::string_view::npos ? line.size() : end;
    cells.emplace_back(line.substr(pos, stop - pos), pos + 1);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return cells;
}

double parse_number(std::string_view cell, const std::string& source, std::size_t line, std::size_t column) {
  std::string_view s = cell;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) throw ParseError(source, line, column, "empty cell");
  if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ParseError(source, line, column, "not a number: '" + std::string(cell) + "'");
  return v;
}

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}

}  // namespace

NumericTable parse_numeric_csv(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError(source, 1, 1, "missing header row");
  NumericTable table;
  for (const auto& [cell, col] : split_cells(lines[0].text)) {
    if (cell.empty()) throw ParseError(source, 1, col, "empty header name");
    if (!cell.empty() && (std::isdigit(static_cast<unsigned char>(cell[0])) || cell[0] == '-' || cell[0] == '.'))
      throw ParseError(source, 1, col, "header row required, found '" + std::string(cell) + "'");
    table.header.emplace_back(cell);
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_cells(lines[i].text);
    if (cells.size() != table.header.size())
      throw ParseError(source, lines[i].number, 1,
                       "expected " + std::to_string(table.header.size()) + " cells, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& [cell, col] : cells) row.push_back(parse_number(cell, source, lines[i].number, col));
    table.rows.push_back(std::move(row));
  }
  return table;
}

PostureSeries parse_postures_csv(std::string_view text, const std::string& source) {
  const NumericTable table = parse_numeric_csv(text, source);
  if (table.header.size() < 2) throw ParseError(source, 1, 1, "need a time column and at least one joint column");
  PostureSeries out;
  out.q.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(table.header.size() - 1));
  out.time.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out.time.push_back(table.rows[i][0]);
    for (std::size_t j = 1; j < table.header.size(); ++j)
      out.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = table.rows[i][j];
  }
  out.validate();
  return out;
}

std::string postures_csv(const PostureSeries& p) {
  std::string out;
  std::vector<std::string> cells{"time"};
  for (std::size_t j = 0; j < p.joints(); ++j) cells.push_back("q" + std::to_string(j + 1));
  append_row(out, cells);
  for (std::size_t i = 0; i < p.samples(); ++i) {
    cells.assign(1, format_double(p.time[i]));
    for (std::size_t j = 0; j < p.joints(); ++j)
      cells.push_back(format_double(p.q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    append_row(out, cells);
  }
  return out;
}

namespace {

const std::vector<std::string> kMetricsHeader{"session", "trial", "re", "sot", "fme", "speed", "accuracy",
                                              "driving_effort", "exploratory_effort", "captured"};

}  // namespace

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out;
  append_row(out, kMetricsHeader);
  for (const auto& r : rows) {
    const TrialMetrics& m = r.metrics;
    append_row(out, {std::to_string(r.session), std::to_string(r.trial), format_double(m.re), format_double(m.sot),
                     format_double(m.fme), format_double(m.speed), format_double(m.accuracy),
                     format_double(m.driving_effort), format_double(m.exploratory_effort), m.captured ? "1" : "0"});
  }
  return out;
}

std::vector<MetricRow> parse_metrics_csv(std::string_view text, const std::string& source) {
  const NumericTable table = parse_numeric_csv(text, source);
  std::vector<std::size_t> idx;
  for (const auto& name : kMetricsHeader) {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw ParseError(source, 1, 1, "missing column '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  std::vector<MetricRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    auto integer = [&](std::size_t k) {
      const double v = r[idx[k]];
      if (!(v >= 0.0) || v != std::floor(v) || v > 1e9)
        throw ParseError(source, i + 2, 1, "column '" + kMetricsHeader[k] + "' must be a non-negative integer");
      return static_cast<int>(v);
    };
    MetricRow row;
    row.session = integer(0);
    row.trial = integer(1);
    row.metrics.re = r[idx[2]];
    row.metrics.sot = r[idx[3]];
    row.metrics.fme = r[idx[4]];
    row.metrics.speed = r[idx[5]];
    row.metrics.accuracy = r[idx[6]];
    row.metrics.driving_effort = r[idx[7]];
    row.metrics.exploratory_effort = r[idx[8]];
    row.metrics.captured = integer(9) != 0;
    rows.push_back(row);
  }
  return rows;
}

std::string trajectory_csv(const TrialRecord& trial, const Environment& env, std::size_t stride) {
  const Trajectory& tr = trial.trajectory;
  if (stride == 0) stride = 1;
  std::string out;
  std::vector<std::string> cells{"time"};
  for (std::size_t i = 0; i < tr.n; ++i) cells.push_back("x" + std::to_string(i + 1));
  for (std::size_t i = 0; i < tr.n; ++i) cells.push_back("e" + std::to_string(i + 1));
  for (std::size_t i = 0; i < tr.m; ++i) cells.push_back("u" + std::to_string(i + 1));
  cells.push_back("fme");
  append_row(out, cells);
  const FmeTracker fme(env);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    if (k % stride != 0 && k + 1 != tr.size()) continue;
    cells.assign(1, format_double(tr.t[k]));
    const auto x = tr.x_at(k);
    for (Eigen::Index i = 0; i < x.size(); ++i) cells.push_back(format_double(x(i)));
    for (Eigen::Index i = 0; i < x.size(); ++i) cells.push_back(format_double(trial.target(i) - x(i)));
    const auto u = tr.u_at(k);
    for (Eigen::Index i = 0; i < u.size(); ++i) cells.push_back(format_double(u(i)));
    cells.push_back(format_double(fme(Matrix(tr.w_hat_at(k)))));
    append_row(out, cells);
  }
  return out;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out;
  std::vector<std::string> cells{result.spec.parameter, "trial"};
  for (Metric m : result.spec.outputs) {
    const std::string name(metric_name(m));
    cells.insert(cells.end(), {name + "_mean", name + "_lo", name + "_hi", name + "_count"});
  }
  append_row(out, cells);
  for (const auto& cell : result.cells) {
    const std::size_t trials = cell.series.empty() ? 0 : cell.series.front().trials;
    for (std::size_t t = 0; t < trials; ++t) {
      cells = {format_double(cell.value), std::to_string(t)};
      for (const auto& s : cell.series) {
        const MeanCi& c = s.per_trial[t];
        cells.insert(cells.end(), {format_double(c.mean), format_double(c.lo), format_double(c.hi), std::to_string(c.count)});
      }
      append_row(out, cells);
    }
  }
  return out;
}

std::string satisficing_csv(const SatisficingResult& result) {
  std::string out;
  append_row(out, {"fme_threshold", "trial_time", "rho_x", "success", "lo", "hi", "successes", "replicates", "frozen_share"});
  for (const auto& c : result.cells)
    append_row(out, {format_double(c.fme_threshold), format_double(c.trial_time), format_double(c.rho_x),
                     format_double(c.success.p), format_double(c.success.lo), format_double(c.success.hi),
                     std::to_string(c.success.successes), std::to_string(c.success.trials), format_double(c.frozen_share)});
  return out;
}

std::string flexibility_csv(const FlexibilityResult& result) {
  std::string out;
  append_row(out, {"h", "sigma_u", "fme_mean", "fme_lo", "fme_hi", "replicates", "residual"});
  for (const auto& c : result.cells)
    append_row(out, {std::to_string(c.h), format_double(c.sigma_u), format_double(c.fme.mean), format_double(c.fme.lo),
                     format_double(c.fme.hi), std::to_string(c.fme.count), format_double(c.residual)});
  return out;
}

std::string long_format_csv(const NumericTable& table, const std::vector<std::string>& keys) {
  std::vector<std::size_t> key_idx, value_idx;
  for (const auto& k : keys) key_idx.push_back(table.column(k));
  for (std::size_t i = 0; i < table.header.size(); ++i)
    if (std::find(key_idx.begin(), key_idx.end(), i) == key_idx.end()) value_idx.push_back(i);
  std::string out;
  std::vector<std::string> cells(keys.begin(), keys.end());
  cells.insert(cells.end(), {"variable", "value"});
  append_row(out, cells);
  for (const auto& row : table.rows)
    for (std::size_t v : value_idx) {
      cells.clear();
      for (std::size_t k : key_idx) cells.push_back(format_double(row[k]));
      cells.push_back(table.header[v]);
      cells.push_back(format_double(row[v]));
      append_row(out, cells);
    }
  return out;
}

// --- JSON -----------------------------------------------------------------------------

namespace {

// JSON has no non-finite numbers; they travel as strings.
Json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double number_from(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw Error(ErrorKind::ParseError, "expected a number, found " + j.dump());
}

Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

std::vector<double> numbers_from(const Json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(number_from(x));
  return v;
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::ParseError, std::string("missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

Json matrix_to_json(const Matrix& a) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < a.cols(); ++k) row.push_back(number(a(i, k)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorKind::ParseError, "matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_array() || static_cast<Eigen::Index>(j[static_cast<std::size_t>(i)].size()) != cols)
      throw Error(ErrorKind::ParseError, "matrix rows differ in length");
    for (Eigen::Index k = 0; k < cols; ++k)
      a(i, k) = number_from(j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]);
  }
  return a;
}

Json vector_to_json(const Vector& v) { return numbers(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& j) {
  const auto v = numbers_from(j);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json to_json(const ModelParams& p) {
  Json j = Json::object();
  for (auto name : ModelParams::names()) j[std::string(name)] = p.get(name);
  return j;
}

ModelParams params_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "parameters must be a JSON object");
  ModelParams p;
  for (const auto& [key, value] : j.items()) p.set(key, number_from(value));
  p.validate();
  return p;
}

Json to_json(const TaskConfig& c) {
  Json j = Json::object();
  Json targets = Json::array();
  for (const auto& t : c.targets) targets.push_back(vector_to_json(t));
  j["targets"] = targets;
  j["center"] = vector_to_json(c.center);
  j["sessions"] = c.sessions;
  j["trials_per_session"] = c.trials_per_session;
  j["mode"] = c.mode == TrialMode::Capture ? "capture" : "fixed";
  j["t_max"] = c.t_max;
  j["trial_time"] = c.trial_time;
  j["rho_x"] = c.rho_x ? Json(*c.rho_x) : Json(nullptr);
  j["seed"] = c.seed;
  j["trial_durations"] = numbers(c.trial_durations);
  j["freeze_fme_threshold"] = c.freeze_fme_threshold ? Json(*c.freeze_fme_threshold) : Json(nullptr);
  j["keep_trajectories"] = c.keep_trajectories;
  return j;
}

TaskConfig task_config_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "task config must be a JSON object");
  TaskConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "targets") {
        c.targets.clear();
        for (const auto& t : v) c.targets.push_back(vector_from_json(t));
      } else if (key == "center") {
        c.center = vector_from_json(v);
      } else if (key == "sessions") {
        c.sessions = v.get<int>();
      } else if (key == "trials_per_session") {
        c.trials_per_session = v.get<int>();
      } else if (key == "mode") {
        const auto m = v.get<std::string>();
        if (m == "capture") c.mode = TrialMode::Capture;
        else if (m == "fixed") c.mode = TrialMode::FixedDuration;
        else throw Error(ErrorKind::InvalidConfig, "mode must be 'capture' or 'fixed'");
      } else if (key == "t_max") {
        c.t_max = number_from(v);
      } else if (key == "trial_time") {
        c.trial_time = number_from(v);
      } else if (key == "rho_x") {
        if (!v.is_null()) c.rho_x = number_from(v);
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "trial_durations") {
        c.trial_durations = numbers_from(v);
      } else if (key == "freeze_fme_threshold") {
        if (!v.is_null()) c.freeze_fme_threshold = number_from(v);
      } else if (key == "keep_trajectories") {
        c.keep_trajectories = v.get<bool>();
      } else {
        throw Error(ErrorKind::UnknownParameter, "unknown task config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("task config: ") + e.what());
  }
  c.validate();
  return c;
}

Json to_json(const CalibrationBundle& b) {
  Json j = Json::object();
  j["m"] = b.pca.joints();
  j["h"] = b.synergies.h();
  j["n"] = b.mapping.n();
  j["pca"] = {{"mean", vector_to_json(b.pca.mean)},
              {"components", matrix_to_json(b.pca.components)},
              {"eigenvalues", vector_to_json(b.pca.eigenvalues)}};
  j["mapping"] = matrix_to_json(b.mapping.c);
  j["synergies"] = matrix_to_json(b.synergies.phi);
  return j;
}

CalibrationBundle calibration_from_json(const Json& j) {
  CalibrationBundle b;
  const Json& pca = field(j, "pca");
  b.pca.mean = vector_from_json(field(pca, "mean"));
  b.pca.components = matrix_from_json(field(pca, "components"));
  b.pca.eigenvalues = vector_from_json(field(pca, "eigenvalues"));
  b.mapping.c = matrix_from_json(field(j, "mapping"));
  b.synergies.phi = matrix_from_json(field(j, "synergies"));
  const auto m = field(j, "m").get<std::size_t>(), h = field(j, "h").get<std::size_t>(),
             n = field(j, "n").get<std::size_t>();
  if (b.pca.joints() != m || b.mapping.m() != m || b.synergies.m() != m || b.synergies.h() != h || b.mapping.n() != n ||
      static_cast<std::size_t>(b.pca.components.cols()) != m)
    throw Error(ErrorKind::DimensionMismatch, "calibration bundle dimensions disagree with m/h/n");
  return b;
}

namespace {

Json individual_to_json(const Individual& ind) {
  return {{"genome", numbers(ind.genome)},
          {"objectives", numbers(ind.objectives)},
          {"rank", ind.rank},
          {"crowding", number(ind.crowding)}};
}

Individual individual_from_json(const Json& j) {
  Individual ind;
  ind.genome = numbers_from(field(j, "genome"));
  ind.objectives = numbers_from(field(j, "objectives"));
  ind.rank = field(j, "rank").get<int>();
  ind.crowding = number_from(field(j, "crowding"));
  return ind;
}

}  // namespace

Json to_json(const FitSummary& s) {
  Json runs = Json::array();
  for (const auto& r : s.runs) {
    Json front = Json::array();
    for (const auto& ind : r.pareto_front) front.push_back(individual_to_json(ind));
    runs.push_back({{"provenance",
                     {{"seed", r.provenance.seed},
                      {"generations", r.provenance.generations},
                      {"population", r.provenance.population},
                      {"evaluations", r.provenance.evaluations}}},
                    {"chosen", to_json(r.chosen)},
                    {"chosen_objectives", numbers(r.chosen_objectives)},
                    {"pareto_front", front}});
  }
  return {{"seed", s.seed},
          {"selection",
           {{"params", to_json(s.selection.params)},
            {"objectives", numbers(s.selection.objectives)},
            {"run", s.selection.run},
            {"fallback", s.selection.fallback}}},
          {"runs", runs}};
}

FitSummary fit_summary_from_json(const Json& j) {
  FitSummary s;
  try {
    s.seed = field(j, "seed").get<std::uint64_t>();
    const Json& sel = field(j, "selection");
    s.selection.params = params_from_json(field(sel, "params"));
    s.selection.objectives = numbers_from(field(sel, "objectives"));
    s.selection.run = field(sel, "run").get<std::size_t>();
    s.selection.fallback = field(sel, "fallback").get<bool>();
    for (const auto& r : field(j, "runs")) {
      FitResult fr;
      const Json& prov = field(r, "provenance");
      fr.provenance.seed = field(prov, "seed").get<std::uint64_t>();
      fr.provenance.generations = field(prov, "generations").get<int>();
      fr.provenance.population = field(prov, "population").get<std::size_t>();
      fr.provenance.evaluations = field(prov, "evaluations").get<std::size_t>();
      fr.chosen = params_from_json(field(r, "chosen"));
      fr.chosen_objectives = numbers_from(field(r, "chosen_objectives"));
      for (const auto& ind : field(r, "pareto_front")) fr.pareto_front.push_back(individual_from_json(ind));
      s.runs.push_back(std::move(fr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("fit result: ") + e.what());
  }
  return s;
}

Json to_json(const ConvergenceReport& r) {
  return {{"rate", number(r.rate)},
          {"r_squared", number(r.r_squared)},
          {"pe_level", number(r.pe_level)},
          {"theta_c", number(r.theta_c)},
          {"epsilon", number(r.epsilon)},
          {"residual_radius", number(r.residual_radius)},
          {"binding_row", r.binding_row},
          {"bound_violated", r.bound_violated},
          {"non_increasing", r.non_increasing},
          {"max_relative_increase", number(r.max_relative_increase)},
          {"initial_error", number(r.initial_error)},
          {"final_error", number(r.final_error)},
          {"sigma_u_grid", numbers(r.sigma_u_grid)},
          {"radius_by_sigma", numbers(r.radius_by_sigma)},
          {"radius_increasing", r.radius_increasing}};
}

ConvergenceReport convergence_report_from_json(const Json& j) {
  ConvergenceReport r;
  try {
    r.rate = number_from(field(j, "rate"));
    r.r_squared = number_from(field(j, "r_squared"));
    r.pe_level = number_from(field(j, "pe_level"));
    r.theta_c = number_from(field(j, "theta_c"));
    r.epsilon = number_from(field(j, "epsilon"));
    r.residual_radius = number_from(field(j, "residual_radius"));
    r.binding_row = field(j, "binding_row").get<std::size_t>();
    r.bound_violated = field(j, "bound_violated").get<bool>();
    r.non_increasing = field(j, "non_increasing").get<bool>();
    r.max_relative_increase = number_from(field(j, "max_relative_increase"));
    r.initial_error = number_from(field(j, "initial_error"));
    r.final_error = number_from(field(j, "final_error"));
    r.sigma_u_grid = numbers_from(field(j, "sigma_u_grid"));
    r.radius_by_sigma = numbers_from(field(j, "radius_by_sigma"));
    r.radius_increasing = field(j, "radius_increasing").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("convergence report: ") + e.what());
  }
  return r;
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // Map the byte offset back to line/column.
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(source, line, column, "invalid JSON");
  }
}

Json to_json(const RunManifest& m) {
  return {{"command_line", m.command_line},
          {"config", m.config},
          {"seed", m.seed},
          {"version", m.version},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"duration_seconds", m.duration_seconds}};
}

RunManifest manifest_from_json(const Json& j) {
  RunManifest m;
  try {
    m.command_line = field(j, "command_line").get<std::vector<std::string>>();
    m.config = field(j, "config");
    m.seed = field(j, "seed").get<std::uint64_t>();
    m.version = field(j, "version").get<std::string>();
    m.inputs = field(j, "inputs").get<std::map<std::string, std::string>>();
    m.outputs = field(j, "outputs").get<std::map<std::string, std::string>>();
    m.duration_seconds = field(j, "duration_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("manifest: ") + e.what());
  }
  return m;
}

std::vector<std::string> verify_manifest(const RunManifest& m) {
  std::vector<std::string> bad;
  for (const auto* group : {&m.inputs, &m.outputs})
    for (const auto& [path, hash] : *group) {
      std::error_code ec;
      if (!fs::exists(path, ec) || file_sha256(path) != hash) bad.push_back(path);
    }
  return bad;
}

std::vector<fs::path> save_experiment(const fs::path& dir, const ExperimentRecord& rec, const Environment& env,
                                      std::size_t stride) {
  std::vector<fs::path> written;
  auto put = [&](const fs::path& p, std::string_view content) {
    write_file_atomic(p, content);
    written.push_back(p);
  };
  put(dir / "config.json", dump_json(to_json(rec.config)));
  put(dir / "params.json", dump_json(to_json(rec.params)));
  put(dir / "metrics.csv", metrics_csv(rec.metrics));
  for (std::size_t s = 0; s < rec.sessions.size(); ++s)
    for (std::size_t t = 0; t < rec.sessions[s].size(); ++t) {
      const TrialRecord& trial = rec.sessions[s][t];
      if (trial.trajectory.size() == 0) continue;
      put(dir / "trajectories" / ("s" + std::to_string(s) + "_t" + std::to_string(t) + ".csv"),
          trajectory_csv(trial, env, stride));
    }
  return written;
}

}  // namespace hml
