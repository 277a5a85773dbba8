#include "hml/error.hpp"
#include "hml/hash.hpp"
#include "hml/io.hpp"

#include "support.hpp"

#include <filesystem>
#include <limits>

using namespace hml;
using namespace hml::test;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "hml_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

template <typename F>
ParseError parse_error_of(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("expected ParseError");
  return ParseError("", 0, 0, "");
}

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("format_double round-trips") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal() * std::pow(10.0, 20.0 * (rng.uniform() - 0.5));
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("numeric CSV parsing") {
  const NumericTable t = parse_numeric_csv("a,b\r\n1,2.5\n-3,nan\n", "mem");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == 2.5);
  CHECK(std::isnan(t.rows[1][1]));
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS(t.column("c"), ParseError);

  const ParseError e = parse_error_of([] { parse_numeric_csv("a,b\n1,2\n3,x7\n", "bad.csv"); });
  CHECK(e.line() == 3);
  CHECK(e.column() == 3);  // character position of the bad field
  CHECK(e.source() == "bad.csv");
  CHECK(std::string(e.what()).find("bad.csv:3:3") != std::string::npos);

  const ParseError ragged = parse_error_of([] { parse_numeric_csv("a,b\n1,2,3\n", "r.csv"); });
  CHECK(ragged.line() == 2);
  CHECK_THROWS_AS(parse_numeric_csv("", "empty.csv"), ParseError);
}

TEST_CASE("postures round-trip") {
  PostureSynthesis spec;
  spec.samples = 300;
  const PostureSeries p = synthesize_postures(spec, 3);
  const std::string text = postures_csv(p);
  CHECK(text.rfind("time,q1,q2,", 0) == 0);
  const PostureSeries back = parse_postures_csv(text, "p.csv");
  CHECK(back.time == p.time);
  CHECK(back.q == p.q);
  CHECK(postures_csv(back) == text);
}

TEST_CASE("metrics round-trip") {
  const Environment env = synthetic_env();
  TaskConfig c;
  c.sessions = 2;
  c.trials_per_session = 5;
  const ExperimentRecord rec = run_experiment(env, subject_params(1), c);
  const std::string text = metrics_csv(rec.metrics);
  CHECK(text.rfind("session,trial,re,sot,fme,speed,accuracy,driving_effort,exploratory_effort,captured\n", 0) == 0);
  const auto back = parse_metrics_csv(text, "m.csv");
  REQUIRE(back.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(back[i].session == rec.metrics[i].session);
    CHECK(back[i].trial == rec.metrics[i].trial);
    CHECK(back[i].metrics.re == rec.metrics[i].metrics.re);
    CHECK(back[i].metrics.captured == rec.metrics[i].metrics.captured);
  }
  CHECK(metrics_csv(back) == text);
}

TEST_CASE("JSON round-trips") {
  Rng rng(4);
  const Matrix a = random_matrix(rng, 3, 5);
  CHECK(matrix_from_json(matrix_to_json(a)) == a);
  const Vector v = random_vector(rng, 7);
  CHECK(vector_from_json(vector_to_json(v)) == v);

  ModelParams p = subject_params(5);
  p.w0_scale = 0.3;
  CHECK(params_from_json(parse_json(dump_json(to_json(p)), "p")) == p);
  CHECK(params_from_json(Json{{"eta", 2.0}}).eta == 2.0);
  CHECK(params_from_json(Json{{"eta", 2.0}}).gamma == ModelParams{}.gamma);
  try {
    params_from_json(Json{{"etta", 2.0}});
    FAIL("expected UnknownParameter");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownParameter);
  }

  TaskConfig c;
  c.sessions = 3;
  c.mode = TrialMode::FixedDuration;
  c.rho_x = 0.7;
  c.freeze_fme_threshold = 0.9;
  c.trial_durations = {1.0, 1.1, 0.5, 0.3, 0.2, 0.1};
  c.trials_per_session = 2;
  c.seed = 99;
  const TaskConfig back = task_config_from_json(parse_json(dump_json(to_json(c)), "c"));
  CHECK(back.sessions == 3);
  CHECK(back.mode == TrialMode::FixedDuration);
  CHECK(back.rho_x == 0.7);
  CHECK(back.freeze_fme_threshold == 0.9);
  CHECK(back.trial_durations == c.trial_durations);
  CHECK(back.seed == 99);
  CHECK(back.targets.size() == 4);
  CHECK(dump_json(to_json(back)) == dump_json(to_json(c)));
  CHECK_THROWS_AS(task_config_from_json(Json{{"sesions", 3}}), Error);
}

TEST_CASE("calibration bundle round-trip") {
  const PcaResult& pca = synthetic_pca();
  CalibrationBundle b{pca, build_mapping(pca), extract_synergies(pca)};
  const Json j = to_json(b);
  CHECK(j["h"] == 4);
  CHECK(j["n"] == 2);
  CHECK(j["m"] == 19);
  const CalibrationBundle back = calibration_from_json(parse_json(dump_json(j), "b"));
  CHECK(back.pca.eigenvalues == pca.eigenvalues);
  CHECK(back.mapping.c == b.mapping.c);
  CHECK(back.synergies.phi == b.synergies.phi);
  CHECK(dump_json(to_json(back)) == dump_json(j));
}

TEST_CASE("fit summary and convergence report round-trip") {
  FitSummary s;
  s.seed = 5;
  FitResult r;
  r.chosen = subject_params(2);
  r.chosen_objectives = {1.5, std::numeric_limits<double>::infinity()};
  r.pareto_front.push_back(Individual{{0.1, 1, 2, 3, 0.5, 0.2}, {1.5, 2.5}, 0, std::numeric_limits<double>::infinity()});
  r.provenance = FitProvenance{7, 100, 100, 10100};
  s.runs = {r, r};
  s.selection = Selection{r.chosen, r.chosen_objectives, 1, true};
  const std::string text = dump_json(to_json(s));
  const FitSummary back = fit_summary_from_json(parse_json(text, "f"));
  CHECK(back.runs.size() == 2);
  CHECK(back.runs[1].pareto_front == r.pareto_front);
  CHECK(back.runs[0].provenance.evaluations == 10100);
  CHECK(back.selection.fallback);
  CHECK(back.selection.run == 1);
  CHECK(std::isinf(back.selection.objectives[1]));
  CHECK(dump_json(to_json(back)) == text);

  ConvergenceReport c;
  c.rate = 0.12;
  c.r_squared = 0.99;
  c.sigma_u_grid = {0.2, 2.0};
  c.radius_by_sigma = {0.5, 1.5};
  c.radius_increasing = true;
  c.binding_row = 1;
  const std::string ct = dump_json(to_json(c));
  CHECK(dump_json(to_json(convergence_report_from_json(parse_json(ct, "c")))) == ct);
}

TEST_CASE("JSON parse errors carry a location") {
  const ParseError e = parse_error_of([] { parse_json("{\n  \"a\": 1,\n  \"b\": ]\n}", "x.json"); });
  CHECK(e.line() == 3);
  CHECK(e.source() == "x.json");
}

TEST_CASE("atomic writes, hashes and manifests") {
  const fs::path f = scratch("sub/dir/out.txt");
  fs::remove_all(f.parent_path());
  write_file_atomic(f, "hello");
  CHECK(read_file(f) == "hello");
  CHECK(file_sha256(f) == sha256_hex("hello"));
  write_file_atomic(f, "bye");
  CHECK(read_file(f) == "bye");
  for (const auto& entry : fs::directory_iterator(f.parent_path())) CHECK(entry.path().filename() == "out.txt");

  RunManifest m;
  m.command_line = {"hml", "x"};
  m.config = Json{{"k", 1}};
  m.seed = 3;
  m.version = version();
  m.outputs[f.string()] = file_sha256(f);
  m.duration_seconds = 0.25;
  const RunManifest back = manifest_from_json(parse_json(dump_json(to_json(m)), "m"));
  CHECK(back.outputs == m.outputs);
  CHECK(back.command_line == m.command_line);
  CHECK(back.seed == 3);
  CHECK(verify_manifest(back).empty());
  write_file_atomic(f, "tampered");
  CHECK(verify_manifest(back) == std::vector<std::string>{f.string()});
  fs::remove(f);
  CHECK(verify_manifest(back).size() == 1);
  CHECK_THROWS_AS(read_file(f), Error);
}

TEST_CASE("experiment directory") {
  const Environment env = synthetic_env();
  TaskConfig c;
  c.sessions = 1;
  c.trials_per_session = 3;
  c.keep_trajectories = true;
  const ExperimentRecord rec = run_experiment(env, subject_params(1), c);
  const fs::path dir = scratch("exp");
  fs::remove_all(dir);
  const auto written = save_experiment(dir, rec, env, 5);
  CHECK(written.size() == 6);
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "trajectories" / "s0_t2.csv"));
  const NumericTable traj = parse_numeric_csv(read_file(dir / "trajectories" / "s0_t0.csv"), "t");
  CHECK(traj.header.front() == "time");
  CHECK(traj.header.back() == "fme");
  CHECK(traj.header.size() == 1 + 2 + 2 + 19 + 1);
  CHECK(traj.rows.back()[0] == doctest::Approx(rec.sessions[0][0].duration));
  CHECK(parse_metrics_csv(read_file(dir / "metrics.csv"), "m").size() == 3);
}

TEST_CASE("long format") {
  const NumericTable t = parse_numeric_csv("eta,trial,x,y\n1,0,5,6\n2,0,7,8\n", "t");
  const std::string text = long_format_csv(t, {"eta", "trial"});
  CHECK(text == "eta,trial,variable,value\n1,0,x,5\n1,0,y,6\n2,0,x,7\n2,0,y,8\n");
  CHECK_THROWS_AS(long_format_csv(t, {"zeta"}), Error);
}
