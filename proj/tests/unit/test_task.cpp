#include "hml/error.hpp"
#include "hml/metrics.hpp"
#include "hml/task.hpp"

#include "support.hpp"

#include <map>

using namespace hml;
using namespace hml::test;

namespace {

Vector pt(double a, double b) { return (Vector(2) << a, b).finished(); }

Matrix window_of(const std::vector<Vector>& points) {
  Matrix w(2, static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) w.col(static_cast<Eigen::Index>(i)) = points[i];
  return w;
}

TaskConfig small_config(int sessions, int trials, std::uint64_t seed = 1) {
  TaskConfig c;
  c.sessions = sessions;
  c.trials_per_session = trials;
  c.seed = seed;
  c.keep_trajectories = true;
  return c;
}

}  // namespace

TEST_CASE("next_target") {
  Rng rng(1);
  const std::vector<Vector> two{pt(0, 0), pt(1, 1)};
  for (int i = 0; i < 50; ++i) CHECK(next_target(rng, two[0], two) == two[1]);

  const auto targets = TaskConfig::default_targets();
  std::map<std::pair<double, double>, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const Vector t = next_target(rng, targets[0], targets);
    REQUIRE((t - targets[0]).norm() > 0.0);
    ++counts[{t(0), t(1)}];
  }
  CHECK(counts.size() == 3);
  for (const auto& [k, v] : counts) CHECK(std::abs(static_cast<double>(v) / draws - 1.0 / 3.0) < 0.01);

  Rng a(9), b(9);
  for (int i = 0; i < 20; ++i) CHECK(next_target(a, targets[1], targets) == next_target(b, targets[1], targets));
  CHECK_THROWS_AS(next_target(rng, pt(0, 0), std::vector<Vector>{pt(0, 0)}), Error);
}

TEST_CASE("default protocol geometry") {
  const auto targets = TaskConfig::default_targets();
  REQUIRE(targets.size() == 4);
  CHECK(targets[0] == pt(0.5, 4.5));
  CHECK(targets[1] == pt(2.5, 0.5));
  CHECK(targets[2] == pt(2.5, 2.5));
  CHECK(targets[3] == pt(4.5, 4.5));
  CHECK(TaskConfig::default_center() == pt(2.5, 2.5));
  TaskConfig c;
  CHECK(c.total_trials() == 480);
}

TEST_CASE("capture_check") {
  const Vector target = pt(1, 1);
  CHECK(capture_check(window_of(std::vector<Vector>(15, pt(1.1, 1.0))), target, 0.25));
  CHECK_FALSE(capture_check(window_of(std::vector<Vector>(15, pt(2.0, 1.0))), target, 0.25));
  std::vector<Vector> moving(15, pt(1.0, 1.0));
  for (std::size_t i = 8; i < 15; ++i) moving[i] = pt(1.003, 1.0);
  CHECK_FALSE(capture_check(window_of(moving), target, 0.25));
  std::vector<Vector> creeping(15);
  for (std::size_t i = 0; i < 15; ++i) creeping[i] = pt(1.0 + 0.0024 * static_cast<double>(i), 1.0);
  CHECK(capture_check(window_of(creeping), target, 0.25));
}

TEST_CASE("perfect-knowledge controller captures") {
  const Environment env = synthetic_env();
  ModelParams p = subject_params(1);
  p.k_p = 8.0;
  p.sigma_u = p.sigma_q = 0.0;
  ModelState s;
  s.w_hat = env.w_true;
  s.u = Vector::Zero(19);
  s.delta_q = Vector::Zero(19);
  s.x = TaskConfig::default_center();
  s.e_x = Vector::Zero(2);
  TrialContext ctx;
  ctx.duration = 2.0;
  Rng rng(1);
  bool frozen = false;
  const TrialRecord rec = run_trial(s, env, p, ctx, pt(4.5, 4.5), 0.25, rng, frozen);
  CHECK(rec.captured);
  REQUIRE(rec.capture_index);
  CHECK(rec.samples == *rec.capture_index + 1);
  CHECK((s.x - pt(4.5, 4.5)).norm() < 0.25);
  CHECK(s.e_x.norm() < 0.25);
}

TEST_CASE("huge exploration noise rarely captures") {
  const Environment env = synthetic_env();
  ModelParams p = subject_params(1);
  p.sigma_u = 100.0;
  int captured = 0;
  for (int seed = 0; seed < 128; ++seed) {
    Rng init(seed), noise(1000 + seed);
    ModelState s = initial_state(env, p, init, TaskConfig::default_center());
    TrialContext ctx;
    ctx.duration = 2.0;
    bool frozen = false;
    if (run_trial(s, env, p, ctx, pt(4.5, 4.5), 0.25, noise, frozen).captured) ++captured;
  }
  CHECK(captured < 64);
}

TEST_CASE("fixed-duration trials run the full length") {
  const Environment env = synthetic_env();
  TaskConfig c = small_config(1, 6);
  c.mode = TrialMode::FixedDuration;
  c.trial_time = 1.2;
  ModelParams p = subject_params(1);
  p.rho_x = 100.0;  // every stationary window would qualify as a capture
  const ExperimentRecord rec = run_experiment(env, p, c);
  for (const auto& t : rec.sessions[0]) {
    CHECK(t.samples == 121);
    CHECK(t.duration == doctest::Approx(1.2));
  }
}

TEST_CASE("capture mode never exceeds t_max") {
  const Environment env = synthetic_env();
  TaskConfig c = small_config(2, 20);
  const ExperimentRecord rec = run_experiment(env, subject_params(1), c);
  for (const auto& session : rec.sessions)
    for (const auto& t : session) {
      CHECK(t.duration <= c.t_max + 1e-12);
      if (t.captured) CHECK(t.samples == *t.capture_index + 1);
    }
}

TEST_CASE("default experiment structure") {
  const Environment env = synthetic_env();
  TaskConfig c;
  const ExperimentRecord rec = run_experiment(env, subject_params(1), c);
  CHECK(rec.metrics.size() == 480);
  REQUIRE(rec.sessions.size() == 8);
  const auto targets = TaskConfig::default_targets();
  for (std::size_t s = 0; s < 8; ++s) {
    REQUIRE(rec.sessions[s].size() == 60);
    for (std::size_t t = 0; t < 60; ++t) {
      const MetricRow& row = rec.metrics[s * 60 + t];
      CHECK(row.session == static_cast<int>(s));
      CHECK(row.trial == static_cast<int>(t));
      const Vector& target = rec.sessions[s][t].target;
      bool listed = false;
      for (const auto& k : targets) listed = listed || (k - target).norm() == 0.0;
      CHECK(listed);
      if (t > 0) CHECK((target - rec.sessions[s][t - 1].target).norm() > 0.0);
    }
  }
}

TEST_CASE("state carries across trials within a session") {
  const Environment env = synthetic_env();
  const ExperimentRecord rec = run_experiment(env, subject_params(1), small_config(2, 10));
  for (const auto& session : rec.sessions)
    for (std::size_t t = 1; t < session.size(); ++t) {
      const Trajectory& prev = session[t - 1].trajectory;
      const Trajectory& next = session[t].trajectory;
      const std::size_t last = prev.size() - 1;
      CHECK(next.x_at(0) == prev.x_at(last));
      CHECK(next.u_at(0) == prev.u_at(last));
      CHECK(next.delta_q_at(0) == prev.delta_q_at(last));
      CHECK(next.w_hat_at(0) == prev.w_hat_at(last));
      CHECK(session[t].start == session[t - 1].final_position);
    }
  // Sessions restart at the center at rest, keeping the estimate.
  const Trajectory& first = rec.sessions[1][0].trajectory;
  CHECK(first.x_at(0) == TaskConfig::default_center());
  CHECK(first.u_at(0).norm() == 0.0);
  CHECK(first.w_hat_at(0) == rec.sessions[0].back().w_hat_end);
}

TEST_CASE("stored FME matches the final estimate") {
  const Environment env = synthetic_env();
  const ExperimentRecord rec = run_experiment(env, subject_params(1), small_config(1, 15));
  for (std::size_t t = 0; t < 15; ++t) {
    const TrialRecord& trial = rec.sessions[0][t];
    CHECK(trial.fme_at_end == doctest::Approx(fme(trial.w_hat_end, env.w_true, env.phi)).epsilon(1e-12));
    CHECK(rec.metrics[t].metrics.fme == trial.fme_at_end);
    const Trajectory& traj = trial.trajectory;
    CHECK(trial.w_hat_end == Matrix(traj.w_hat_at(traj.size() - 1)));
  }
}

TEST_CASE("no forward learning keeps FME constant") {
  const Environment env = synthetic_env();
  ModelParams p = subject_params(1);
  p.gamma = 0.0;
  const ExperimentRecord rec = run_experiment(env, p, small_config(2, 10));
  for (const auto& row : rec.metrics) CHECK(row.metrics.fme == rec.metrics.front().metrics.fme);
}

TEST_CASE("experiments are reproducible and seed dependent") {
  const Environment env = synthetic_env();
  const auto a = run_experiment(env, subject_params(2), small_config(1, 8, 5));
  const auto b = run_experiment(env, subject_params(2), small_config(1, 8, 5));
  const auto c = run_experiment(env, subject_params(2), small_config(1, 8, 6));
  bool same = true, differs = false;
  for (std::size_t i = 0; i < 8; ++i) {
    same = same && a.metrics[i].metrics.re == b.metrics[i].metrics.re && a.metrics[i].metrics.sot == b.metrics[i].metrics.sot;
    differs = differs || a.metrics[i].metrics.re != c.metrics[i].metrics.re;
  }
  CHECK(same);
  CHECK(differs);
  CHECK(a.env_fingerprint == environment_fingerprint(env));
}

TEST_CASE("forced trial durations") {
  const Environment env = synthetic_env();
  TaskConfig c = small_config(1, 3);
  c.trial_durations = {0.5, 1.0, 0.25};
  const ExperimentRecord rec = run_experiment(env, subject_params(1), c);
  CHECK(rec.sessions[0][0].samples == 51);
  CHECK(rec.sessions[0][1].samples == 101);
  CHECK(rec.sessions[0][2].samples == 26);
  c.trial_durations = {0.5};
  CHECK_THROWS_AS(run_experiment(env, subject_params(1), c), Error);
}

TEST_CASE("learning freezes at the FME threshold") {
  const Environment env = synthetic_env();
  TaskConfig c = small_config(1, 10);
  c.freeze_fme_threshold = 10.0;  // met by any estimate: frozen from the start
  ModelParams p = subject_params(4);
  const ExperimentRecord rec = run_experiment(env, p, c);
  REQUIRE(rec.frozen_at_trial);
  CHECK(*rec.frozen_at_trial == 0);
  for (const auto& row : rec.metrics) CHECK(row.metrics.fme == rec.metrics.front().metrics.fme);

  c.freeze_fme_threshold = 1e-6;  // never met
  const ExperimentRecord never = run_experiment(env, p, c);
  CHECK_FALSE(never.frozen_at_trial);
}

TEST_CASE("reach end and onset rules") {
  Trajectory traj;
  traj.reset(2, 3, 1, 400);
  ModelState s;
  s.x = pt(0, 0);
  s.u = Vector::Zero(3);
  s.delta_q = Vector::Zero(3);
  s.w_hat = Matrix::Zero(2, 1);
  s.e_x = Vector::Zero(2);
  // 10 quiet samples, 40 moving samples, then still.
  for (int k = 0; k < 300; ++k) {
    if (k >= 10 && k < 50) {
      s.u = Vector::Constant(3, 1.0);
      s.x(0) += 0.05;
    } else {
      s.u.setZero();
    }
    traj.push(k * 0.01, s);
  }
  CHECK(movement_onset(traj) == 10);
  // The 15th stationary displacement after the last move at sample 49 ends at 64.
  CHECK(reach_end_index(traj, 0.01) == 64);

  Trajectory drift;
  drift.reset(2, 3, 1, 400);
  for (int k = 0; k < 300; ++k) {
    s.u = Vector::Constant(3, 1.0);
    s.x(0) += 0.01;
    drift.push(k * 0.01, s);
  }
  CHECK(reach_end_index(drift, 0.01) == 200);
}

TEST_CASE("config validation") {
  TaskConfig c;
  c.sessions = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TaskConfig{};
  c.targets = {pt(1, 1), pt(1, 1)};
  CHECK_THROWS_AS(c.validate(), Error);
  c = TaskConfig{};
  c.rho_x = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TaskConfig{};
  CHECK_NOTHROW(c.validate());
}
