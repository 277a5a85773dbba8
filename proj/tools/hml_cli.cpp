#include "hml/analysis.hpp"
#include "hml/error.hpp"
#include "hml/fitting.hpp"
#include "hml/hash.hpp"
#include "hml/io.hpp"
#include "hml/rng.hpp"
#include "hml/synergy.hpp"
#include "hml/task.hpp"
#include "hml/theory.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hml;

namespace {

constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

struct Common {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads (results do not depend on this)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  auto* o = cmd->add_option("--out", c.out, "Output path");
  if (out_required) o->required();
}

std::string absolute_string(const fs::path& p) { return fs::absolute(p).lexically_normal().string(); }

// Collects inputs/outputs, then writes the manifest next to the primary output.
class Run {
 public:
  Run(std::vector<std::string> argv, const Common& common) : common_(common), start_(std::chrono::steady_clock::now()) {
    manifest_.command_line = std::move(argv);
    manifest_.seed = common.seed;
    manifest_.version = version();
  }

  void input(const fs::path& p) { manifest_.inputs[absolute_string(p)] = file_sha256(p); }
  void output(const fs::path& p, std::string_view content) {
    write_file_atomic(p, content);
    manifest_.outputs[absolute_string(p)] = sha256_hex(content);
  }
  void output_written(const fs::path& p) { manifest_.outputs[absolute_string(p)] = file_sha256(p); }
  Json& config() { return manifest_.config; }

  void finish(const fs::path& manifest_path) {
    manifest_.config["seed"] = common_.seed;
    manifest_.config["threads"] = common_.threads;
    manifest_.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file_atomic(manifest_path, dump_json(to_json(manifest_)));
  }
  void finish_file() { finish(fs::path(common_.out + ".manifest.json")); }

 private:
  const Common& common_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// A calibration bundle (.json) or a raw posture recording (.csv) calibrated on the fly.
CalibrationBundle load_calibration(const std::string& path, std::size_t synergies, Run& run) {
  run.input(path);
  const std::string text = read_file(path);
  if (ends_with(path, ".csv")) {
    CalibrationBundle b;
    b.pca = fit_pca(parse_postures_csv(text, path));
    b.mapping = build_mapping(b.pca);
    b.synergies = extract_synergies(b.pca, synergies);
    return b;
  }
  return calibration_from_json(parse_json(text, path));
}

struct ParamsSource {
  std::string file;
  int subject = 1;
};

void add_params(CLI::App* cmd, ParamsSource& p) {
  auto* f = cmd->add_option("--params", p.file, "Model parameters (flat JSON)");
  cmd->add_option("--subject", p.subject, "Use the fitted parameters of subject 1-6")
      ->check(CLI::Range(1, 6))
      ->capture_default_str()
      ->excludes(f);
}

ModelParams load_params(const ParamsSource& src, Run& run) {
  if (src.file.empty()) return subject_params(src.subject);
  run.input(src.file);
  return params_from_json(parse_json(read_file(src.file), src.file));
}

struct TaskOptions {
  std::string file;
  std::optional<int> sessions, trials;
  std::optional<std::string> mode;
  std::optional<double> trial_time, t_max, rho_x;
};

void add_task(CLI::App* cmd, TaskOptions& t) {
  cmd->add_option("--config", t.file, "Task configuration (JSON); flags override it");
  cmd->add_option("--sessions", t.sessions, "Sessions per experiment")->check(CLI::PositiveNumber);
  cmd->add_option("--trials", t.trials, "Trials per session")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", t.mode, "Trial mode")->check(CLI::IsMember({"capture", "fixed"}));
  cmd->add_option("--trial-time", t.trial_time, "Fixed-duration trial length (s)");
  cmd->add_option("--t-max", t.t_max, "Capture-mode time cap (s)");
  cmd->add_option("--rho-x", t.rho_x, "Target radius (screen units)");
}

TaskConfig load_task(const TaskOptions& t, Run& run) {
  TaskConfig c;
  if (!t.file.empty()) {
    run.input(t.file);
    c = task_config_from_json(parse_json(read_file(t.file), t.file));
  }
  if (t.sessions) c.sessions = *t.sessions;
  if (t.trials) c.trials_per_session = *t.trials;
  if (t.mode) c.mode = *t.mode == "capture" ? TrialMode::Capture : TrialMode::FixedDuration;
  if (t.trial_time) c.trial_time = *t.trial_time;
  if (t.t_max) c.t_max = *t.t_max;
  if (t.rho_x) c.rho_x = *t.rho_x;
  c.validate();
  return c;
}

Json check(const std::string& name, bool pass, Json detail = Json::object()) {
  detail["name"] = name;
  detail["pass"] = pass;
  return detail;
}

// Grid-free check: the root satisfies the inequality just below and fails just above.
Json verify_theta_c(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {11}));
  std::size_t failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const double c = 5.0 * (1.0 - rng.uniform()), mu = 5.0 * (1.0 - rng.uniform());
    const double t = theta_c(c, mu);
    const bool below = t - 1e-9 < 0.0 || stability_cubic(t - 1e-9, c, mu) < 0.0;
    const bool above = !(stability_cubic(t + 1e-9, c, mu) < 0.0);
    if (!below || !above) ++failures;
  }
  const bool zero_ok = theta_c(0.0, 1.0) == 0.0 && stability_cubic(0.0, 1.0, 2.4581) < 0.0;
  return check("theta_c", failures == 0 && zero_ok, {{"pairs", 1000}, {"failures", failures}});
}

Json verify_timescale() {
  Json values = Json::array();
  bool ok = true;
  for (int s = 1; s <= 6; ++s) {
    const double e = timescale_ratio(subject_params(s)).epsilon;
    values.push_back(e);
    ok = ok && e < 0.05;
  }
  const double s1 = timescale_ratio(subject_params(1)).epsilon;
  ok = ok && std::abs(s1 - 1.06e-3) <= 1e-5;
  return check("timescale", ok, {{"epsilon", values}});
}

Json verify_pe(std::uint64_t seed) {
  const ModelParams p = subject_params(1);
  const std::size_t m = 19, steps = 60000;
  Rng rng(derive_seed(seed, {12}));
  Matrix dq(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(steps));
  Vector state = Vector::Zero(static_cast<Eigen::Index>(m)), noise(static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < steps; ++k) {
    rng.fill_normal(noise);
    state += p.dt * (-p.a * state) + std::sqrt(p.dt) * p.sigma_q * noise;
    dq.col(static_cast<Eigen::Index>(k)) = state;
  }
  const double rich = pe_level(dq, p.dt, 100.0);
  Vector dir = Vector::Ones(static_cast<Eigen::Index>(m)).normalized();
  const Matrix line = dir * dq.row(0);
  const double flat = pe_level(line, p.dt, 100.0);
  return check("pe", rich > 0.0 && flat <= 1e-12, {{"white_noise_level", rich}, {"rank_one_level", flat}});
}

Json verify_lyapunov(const Environment& env, std::uint64_t seed) {
  const LyapunovCheck lc = lyapunov_check(env, subject_params(1), 1000, derive_seed(seed, {13}));
  return check("lyapunov", lc.counterexamples == 0,
               {{"samples", lc.samples}, {"counterexamples", lc.counterexamples}, {"min_eigenvalue", lc.min_eigenvalue}});
}

std::pair<Json, ConvergenceReport> verify_convergence(const Environment& env, const Common& common) {
  ModelParams p = subject_params(1);
  p.sigma_u = 0.0;
  ConvergenceSpec spec;
  spec.seed = derive_seed(common.seed, {14});
  spec.threads = common.threads;
  const ConvergenceReport r = convergence_test(env, p, spec);
  const bool ok = r.r_squared > 0.9 && r.non_increasing && r.radius_increasing && !r.bound_violated;
  return {check("convergence", ok, {{"r_squared", r.r_squared}, {"rate", r.rate}}), r};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human motor learning model toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));
  std::vector<std::string> args(argv, argv + argc);
  std::function<void()> action;

  // synth-postures
  Common c_synth;
  PostureSynthesis synth;
  auto* cmd_synth = app.add_subcommand("synth-postures", "Write a synthetic calibration recording");
  add_common(cmd_synth, c_synth);
  cmd_synth->add_option("--samples", synth.samples)->capture_default_str();
  cmd_synth->add_option("--joints", synth.joints)->capture_default_str();
  cmd_synth->callback([&] {
    action = [&] {
      Run run(args, c_synth);
      const PostureSeries p = synthesize_postures(synth, c_synth.seed);
      run.config() = {{"samples", synth.samples}, {"joints", synth.joints}};
      run.output(c_synth.out, postures_csv(p));
      run.finish_file();
    };
  });

  // calibrate
  Common c_cal;
  std::string cal_input;
  std::size_t cal_h = kDefaultSynergies;
  auto* cmd_cal = app.add_subcommand("calibrate", "PCA calibration: mapping matrix and synergies");
  add_common(cmd_cal, c_cal);
  cmd_cal->add_option("postures,--postures", cal_input, "Posture CSV (time, q1..qm)")->required();
  cmd_cal->add_option("--synergies", cal_h, "Number of synergies h")->capture_default_str();
  cmd_cal->callback([&] {
    action = [&] {
      Run run(args, c_cal);
      run.input(cal_input);
      CalibrationBundle b;
      b.pca = fit_pca(parse_postures_csv(read_file(cal_input), cal_input));
      b.mapping = build_mapping(b.pca);
      b.synergies = extract_synergies(b.pca, cal_h);
      run.config() = {{"synergies", cal_h}};
      run.output(c_cal.out, dump_json(to_json(b)));
      run.finish_file();
    };
  });

  // simulate
  Common c_sim;
  std::string sim_calib;
  ParamsSource sim_params;
  TaskOptions sim_task;
  bool sim_traj = false;
  std::size_t sim_stride = 1, sim_h = kDefaultSynergies;
  auto* cmd_sim = app.add_subcommand("simulate", "Run one experiment and write its directory");
  add_common(cmd_sim, c_sim);
  cmd_sim->add_option("--calib", sim_calib, "Calibration bundle (.json) or postures (.csv)")->required();
  cmd_sim->add_option("--synergies", sim_h, "Synergies when calibrating from postures")->capture_default_str();
  add_params(cmd_sim, sim_params);
  add_task(cmd_sim, sim_task);
  cmd_sim->add_flag("--trajectories", sim_traj, "Also write per-trial trajectories");
  cmd_sim->add_option("--stride", sim_stride, "Trajectory sample stride")->check(CLI::PositiveNumber);
  cmd_sim->callback([&] {
    action = [&] {
      Run run(args, c_sim);
      const Environment env = load_calibration(sim_calib, sim_h, run).environment();
      const ModelParams params = load_params(sim_params, run);
      TaskConfig config = load_task(sim_task, run);
      config.seed = c_sim.seed;
      config.keep_trajectories = sim_traj;
      const ExperimentRecord rec = run_experiment(env, params, config);
      for (const auto& p : save_experiment(c_sim.out, rec, env, sim_stride)) run.output_written(p);
      run.config() = {{"task", to_json(config)}, {"params", to_json(params)}, {"stride", sim_stride}};
      run.finish(fs::path(c_sim.out) / "manifest.json");
    };
  });

  // fit
  Common c_fit;
  std::string fit_data, fit_calib;
  std::size_t fit_h = kDefaultSynergies;
  FitOptions fit_opts;
  TaskOptions fit_task;
  auto* cmd_fit = app.add_subcommand("fit", "Fit model parameters to per-trial RE/SoT data");
  add_common(cmd_fit, c_fit);
  cmd_fit->add_option("--data", fit_data, "metrics.csv of the reference experiment")->required();
  cmd_fit->add_option("--calib", fit_calib, "Calibration bundle (.json) or postures (.csv)")->required();
  cmd_fit->add_option("--synergies", fit_h)->capture_default_str();
  cmd_fit->add_option("--runs", fit_opts.runs, "Independent NSGA-II runs")->capture_default_str()->check(CLI::PositiveNumber);
  cmd_fit->add_option("--population", fit_opts.nsga.population)->capture_default_str();
  cmd_fit->add_option("--generations", fit_opts.nsga.generations)->capture_default_str();
  add_task(cmd_fit, fit_task);
  cmd_fit->callback([&] {
    action = [&] {
      Run run(args, c_fit);
      const Environment env = load_calibration(fit_calib, fit_h, run).environment();
      run.input(fit_data);
      const auto rows = parse_metrics_csv(read_file(fit_data), fit_data);
      const ReferenceData ref = reference_from_metrics(rows);
      fit_opts.task = load_task(fit_task, run);
      fit_opts.nsga.seed = c_fit.seed;
      fit_opts.nsga.threads = c_fit.threads;
      const FitSummary summary = fit(ref, env, fit_opts);
      run.config() = {{"runs", fit_opts.runs},
                      {"population", fit_opts.nsga.population},
                      {"generations", fit_opts.nsga.generations},
                      {"bounds_low", fit_opts.bounds.low},
                      {"bounds_high", fit_opts.bounds.high}};
      run.output(c_fit.out, dump_json(to_json(summary)));
      run.finish_file();
    };
  });

  // sweep
  Common c_sw;
  std::string sw_calib;
  std::size_t sw_h = kDefaultSynergies;
  ParamsSource sw_params;
  TaskOptions sw_task;
  SweepSpec sw_spec;
  std::vector<std::string> sw_metrics;
  auto* cmd_sw = app.add_subcommand("sweep", "Monte Carlo sweep of one parameter");
  add_common(cmd_sw, c_sw);
  cmd_sw->add_option("--calib", sw_calib)->required();
  cmd_sw->add_option("--synergies", sw_h)->capture_default_str();
  cmd_sw->add_option("--param", sw_spec.parameter, "Parameter name")->required();
  cmd_sw->add_option("--grid", sw_spec.grid, "Comma-separated grid values")->required()->delimiter(',');
  cmd_sw->add_option("--replicates", sw_spec.replicates)->capture_default_str();
  cmd_sw->add_option("--metrics", sw_metrics, "Metrics to aggregate (default all)")->delimiter(',');
  add_params(cmd_sw, sw_params);
  add_task(cmd_sw, sw_task);
  cmd_sw->callback([&] {
    const auto& names = ModelParams::names();
    if (std::find(names.begin(), names.end(), sw_spec.parameter) == names.end())
      throw CLI::ValidationError("--param", "unknown parameter '" + sw_spec.parameter + "'");
    action = [&] {
      Run run(args, c_sw);
      const Environment env = load_calibration(sw_calib, sw_h, run).environment();
      sw_spec.base = load_params(sw_params, run);
      sw_spec.seed = c_sw.seed;
      if (!sw_metrics.empty()) {
        sw_spec.outputs.clear();
        for (const auto& m : sw_metrics) sw_spec.outputs.push_back(metric_from_name(m));
      }
      const TaskConfig config = load_task(sw_task, run);
      const SweepResult res = sweep(sw_spec, env, config, c_sw.threads);
      run.config() = {{"parameter", sw_spec.parameter},
                      {"grid", sw_spec.grid},
                      {"replicates", sw_spec.replicates},
                      {"base", to_json(sw_spec.base)},
                      {"task", to_json(config)}};
      run.output(c_sw.out, sweep_csv(res));
      run.finish_file();
    };
  });

  // satisficing
  Common c_sat;
  std::string sat_calib;
  std::size_t sat_h = kDefaultSynergies;
  ParamsSource sat_params;
  TaskOptions sat_task;
  SatisficingSpec sat_spec;
  auto* cmd_sat = app.add_subcommand("satisficing", "Success probability under frozen learning");
  add_common(cmd_sat, c_sat);
  cmd_sat->add_option("--calib", sat_calib)->required();
  cmd_sat->add_option("--synergies", sat_h)->capture_default_str();
  cmd_sat->add_option("--thresholds", sat_spec.fme_thresholds)->delimiter(',');
  cmd_sat->add_option("--rho", sat_spec.rho_x)->delimiter(',');
  cmd_sat->add_option("--times", sat_spec.trial_times)->delimiter(',');
  cmd_sat->add_option("--replicates", sat_spec.replicates)->capture_default_str();
  add_params(cmd_sat, sat_params);
  add_task(cmd_sat, sat_task);
  cmd_sat->callback([&] {
    action = [&] {
      Run run(args, c_sat);
      const Environment env = load_calibration(sat_calib, sat_h, run).environment();
      const ModelParams params = load_params(sat_params, run);
      const TaskConfig config = load_task(sat_task, run);
      sat_spec.seed = c_sat.seed;
      const SatisficingResult res = satisficing_study(sat_spec, env, params, config, c_sat.threads);
      run.config() = {{"thresholds", sat_spec.fme_thresholds},
                      {"rho_x", sat_spec.rho_x},
                      {"trial_times", sat_spec.trial_times},
                      {"replicates", sat_spec.replicates},
                      {"params", to_json(params)},
                      {"task", to_json(config)}};
      run.output(c_sat.out, satisficing_csv(res));
      run.finish_file();
    };
  });

  // flexibility
  Common c_flex;
  std::string flex_calib;
  ParamsSource flex_params;
  TaskOptions flex_task;
  FlexibilitySpec flex_spec;
  std::optional<std::uint64_t> flex_mapping_seed;
  auto* cmd_flex = app.add_subcommand("flexibility", "FME over synergy count and exploration noise");
  add_common(cmd_flex, c_flex);
  cmd_flex->add_option("--calib", flex_calib)->required();
  cmd_flex->add_option("--h-grid", flex_spec.synergy_counts)->delimiter(',');
  cmd_flex->add_option("--sigma-grid", flex_spec.sigma_u)->delimiter(',');
  cmd_flex->add_option("--replicates", flex_spec.replicates)->capture_default_str();
  cmd_flex->add_option("--end-session", flex_spec.sessions, "Session whose end is scored")->capture_default_str();
  cmd_flex->add_option("--mapping-seed", flex_mapping_seed, "Seed of the random out-of-span mapping");
  add_params(cmd_flex, flex_params);
  add_task(cmd_flex, flex_task);
  cmd_flex->callback([&] {
    action = [&] {
      Run run(args, c_flex);
      const CalibrationBundle b = load_calibration(flex_calib, kDefaultSynergies, run);
      const ModelParams params = load_params(flex_params, run);
      const TaskConfig config = load_task(flex_task, run);
      flex_spec.seed = c_flex.seed;
      const std::uint64_t mseed = flex_mapping_seed.value_or(derive_seed(c_flex.seed, {21}));
      const Matrix c = random_mapping(b.mapping.n(), b.pca.joints(), spectral_norm(b.mapping.c), mseed);
      const FlexibilityResult res = flexibility_study(flex_spec, b.pca, c, params, config, c_flex.threads);
      Json hs = Json::array();
      for (auto h : flex_spec.synergy_counts) hs.push_back(h);
      run.config() = {{"h_grid", hs},
                      {"sigma_u", flex_spec.sigma_u},
                      {"replicates", flex_spec.replicates},
                      {"sessions", flex_spec.sessions},
                      {"mapping_seed", mseed},
                      {"params", to_json(params)}};
      run.output(c_flex.out, flexibility_csv(res));
      run.finish_file();
    };
  });

  // verify
  Common c_ver;
  std::string ver_suite = "all", ver_calib;
  auto* cmd_ver = app.add_subcommand("verify", "Numerical checks of the stability analysis");
  add_common(cmd_ver, c_ver);
  cmd_ver->add_option("--suite", ver_suite)
      ->check(CLI::IsMember({"all", "theta_c", "timescale", "pe", "convergence", "lyapunov"}))
      ->capture_default_str();
  cmd_ver->add_option("--calib", ver_calib, "Calibration (default: synthetic postures)");
  bool ver_failed = false;
  cmd_ver->callback([&] {
    action = [&] {
      Run run(args, c_ver);
      auto environment = [&] {
        if (!ver_calib.empty()) return load_calibration(ver_calib, kDefaultSynergies, run).environment();
        const PcaResult pca = fit_pca(synthesize_postures(PostureSynthesis{}, 7));
        return Environment::make(build_mapping(pca), extract_synergies(pca));
      };
      Json report = {{"suite", ver_suite}, {"checks", Json::array()}};
      const bool all = ver_suite == "all";
      if (all || ver_suite == "theta_c") report["checks"].push_back(verify_theta_c(c_ver.seed));
      if (all || ver_suite == "timescale") report["checks"].push_back(verify_timescale());
      if (all || ver_suite == "pe") report["checks"].push_back(verify_pe(c_ver.seed));
      if (all || ver_suite == "lyapunov") report["checks"].push_back(verify_lyapunov(environment(), c_ver.seed));
      if (all || ver_suite == "convergence") {
        auto [chk, rep] = verify_convergence(environment(), c_ver);
        report["checks"].push_back(chk);
        report["convergence"] = to_json(rep);
      }
      bool pass = true;
      for (const auto& chk : report["checks"]) pass = pass && chk["pass"].get<bool>();
      report["pass"] = pass;
      ver_failed = !pass;
      run.config() = {{"suite", ver_suite}};
      run.output(c_ver.out, dump_json(report));
      run.finish_file();
      for (const auto& chk : report["checks"])
        std::cout << (chk["pass"].get<bool>() ? "PASS " : "FAIL ") << chk["name"].get<std::string>() << "\n";
    };
  });

  // emit-plotdata
  Common c_plot;
  std::string plot_input;
  std::vector<std::string> plot_keys;
  auto* cmd_plot = app.add_subcommand("emit-plotdata", "Reshape a result table into long format");
  add_common(cmd_plot, c_plot);
  cmd_plot->add_option("--input", plot_input, "metrics/sweep/satisficing/flexibility CSV")->required();
  cmd_plot->add_option("--keys", plot_keys, "Identifier columns (auto-detected by default)")->delimiter(',');
  cmd_plot->callback([&] {
    action = [&] {
      Run run(args, c_plot);
      run.input(plot_input);
      const NumericTable table = parse_numeric_csv(read_file(plot_input), plot_input);
      std::vector<std::string> keys = plot_keys;
      if (keys.empty()) {
        const auto& h = table.header;
        auto has = [&](const char* name) { return std::find(h.begin(), h.end(), name) != h.end(); };
        if (has("session") && has("trial")) keys = {"session", "trial"};
        else if (has("fme_threshold")) keys = {"fme_threshold", "trial_time", "rho_x"};
        else if (has("h") && has("sigma_u")) keys = {"h", "sigma_u"};
        else if (h.size() >= 2 && h[1] == "trial") keys = {h[0], "trial"};
        else throw CLI::ValidationError("--keys", "cannot infer key columns; pass --keys");
      }
      run.config() = {{"keys", keys}};
      run.output(c_plot.out, long_format_csv(table, keys));
      run.finish_file();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (action) action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::UnknownParameter ? kUsageError : kDomainError;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return ver_failed ? kDomainError : 0;
}
