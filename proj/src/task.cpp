#include "hml/task.hpp"

#include "hml/error.hpp"
#include "hml/hash.hpp"
#include "hml/metrics.hpp"

#include <cmath>
#include <string>

namespace hml {

namespace {

std::size_t steps_for(double seconds, double dt) {
  return static_cast<std::size_t>(std::ceil(seconds / dt - 1e-9));
}

Vector point(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

std::vector<Vector> TaskConfig::default_targets() {
  return {point(0.5, 4.5), point(2.5, 0.5), point(2.5, 2.5), point(4.5, 4.5)};
}

Vector TaskConfig::default_center() { return point(2.5, 2.5); }

void TaskConfig::validate() const {
  if (targets.size() < 2) throw Error(ErrorKind::InvalidConfig, "need at least two targets");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].size() != center.size())
      throw Error(ErrorKind::InvalidConfig, "target dimension differs from center dimension");
    for (std::size_t j = 0; j < i; ++j)
      if ((targets[i] - targets[j]).norm() <= 1e-12)
        throw Error(ErrorKind::InvalidConfig, "targets must be distinct");
  }
  if (sessions < 1 || trials_per_session < 1)
    throw Error(ErrorKind::InvalidConfig, "sessions and trials per session must be >= 1");
  if (!(t_max > 0.0) || !(trial_time > 0.0))
    throw Error(ErrorKind::InvalidConfig, "trial time limits must be positive");
  if (rho_x && !(*rho_x > 0.0)) throw Error(ErrorKind::InvalidConfig, "rho_x must be positive");
  if (!trial_durations.empty()) {
    if (trial_durations.size() != static_cast<std::size_t>(total_trials()))
      throw Error(ErrorKind::InvalidConfig, "trial_durations has " + std::to_string(trial_durations.size()) +
                                                " entries for " + std::to_string(total_trials()) + " trials");
    for (double d : trial_durations)
      if (!(d > 0.0)) throw Error(ErrorKind::InvalidConfig, "trial durations must be positive");
  }
  if (freeze_fme_threshold && !(*freeze_fme_threshold > 0.0))
    throw Error(ErrorKind::InvalidConfig, "FME threshold must be positive");
}

void Trajectory::reset(std::size_t n_, std::size_t m_, std::size_t h_, std::size_t reserve) {
  n = n_;
  m = m_;
  h = h_;
  t.clear();
  x.clear();
  u.clear();
  delta_q.clear();
  w_hat.clear();
  t.reserve(reserve);
  x.reserve(reserve * n);
  u.reserve(reserve * m);
  delta_q.reserve(reserve * m);
  w_hat.reserve(reserve * n * h);
}

void Trajectory::push(double time, const ModelState& s) {
  t.push_back(time);
  x.insert(x.end(), s.x.data(), s.x.data() + n);
  u.insert(u.end(), s.u.data(), s.u.data() + m);
  delta_q.insert(delta_q.end(), s.delta_q.data(), s.delta_q.data() + m);
  w_hat.insert(w_hat.end(), s.w_hat.data(), s.w_hat.data() + n * h);
}

Eigen::Map<const Vector> Trajectory::x_at(std::size_t i) const {
  return {x.data() + i * n, static_cast<Eigen::Index>(n)};
}
Eigen::Map<const Vector> Trajectory::u_at(std::size_t i) const {
  return {u.data() + i * m, static_cast<Eigen::Index>(m)};
}
Eigen::Map<const Vector> Trajectory::delta_q_at(std::size_t i) const {
  return {delta_q.data() + i * m, static_cast<Eigen::Index>(m)};
}
Eigen::Map<const Matrix> Trajectory::w_hat_at(std::size_t i) const {
  return {w_hat.data() + i * n * h, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h)};
}
Eigen::Map<const Matrix> Trajectory::positions() const {
  return {x.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(size())};
}

Vector next_target(Rng& rng, const Vector& current, const std::vector<Vector>& targets) {
  std::vector<const Vector*> candidates;
  candidates.reserve(targets.size());
  for (const Vector& t : targets)
    if (t.size() != current.size() || (t - current).norm() > 1e-12) candidates.push_back(&t);
  if (candidates.empty()) throw Error(ErrorKind::InvalidConfig, "no target differs from the current one");
  return *candidates[rng.index(candidates.size())];
}

bool capture_check(const Eigen::Ref<const Matrix>& window, const Vector& target, double rho_x) {
  if (window.cols() == 0) return false;
  for (Eigen::Index k = 1; k < window.cols(); ++k)
    if ((window.col(k) - window.col(k - 1)).norm() > kStationarityTolerance) return false;
  return (window.col(window.cols() - 1) - target).norm() <= rho_x;
}

std::size_t movement_onset(const Trajectory& traj) {
  double peak = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) peak = std::max(peak, traj.u_at(i).norm());
  if (peak == 0.0) return 0;
  for (std::size_t i = 0; i < traj.size(); ++i)
    if (traj.u_at(i).norm() > kOnsetFraction * peak) return i;
  return 0;
}

std::size_t reach_end_index(const Trajectory& traj, double dt) {
  if (traj.size() == 0) return 0;
  const std::size_t last = traj.size() - 1;
  const std::size_t limit = std::min(last, movement_onset(traj) + steps_for(kReachWindow, dt));
  std::size_t run = 0;
  for (std::size_t k = 1; k <= limit; ++k) {
    run = (traj.x_at(k) - traj.x_at(k - 1)).norm() <= kStationarityTolerance ? run + 1 : 0;
    if (run >= kStationarySamples) return k;
  }
  return limit;
}

TrialRecord run_trial(ModelState& state, const Environment& env, const ModelParams& params,
                      const TrialContext& ctx, const Vector& target, double rho_x, Rng& noise,
                      bool& learning_frozen) {
  TrialRecord rec;
  rec.target = target;
  rec.start = state.x;
  rec.dt = params.dt;
  rec.budget = ctx.duration;
  state.e_x = target - state.x;

  ModelParams effective = params;
  if (learning_frozen) effective.gamma = 0.0;
  Stepper stepper(env, effective);

  std::optional<FmeTracker> tracker;
  auto maybe_freeze = [&] {
    if (!tracker || learning_frozen) return;
    if ((*tracker)(state.w_hat) <= *ctx.freeze_fme_threshold) {
      learning_frozen = true;
      effective.gamma = 0.0;
      stepper.set_params(effective);
    }
  };
  if (ctx.freeze_fme_threshold && !learning_frozen) {
    tracker.emplace(env);
    maybe_freeze();
  }

  const std::size_t steps = steps_for(ctx.duration, params.dt);
  Trajectory& traj = rec.trajectory;
  traj.reset(env.n(), env.m(), env.h(), steps + 1);
  traj.push(0.0, state);

  std::size_t run = 0;
  for (std::size_t k = 1; k <= steps; ++k) {
    if (!stepper.step(state, noise)) throw NonFiniteStateError(ctx.session, ctx.trial, k, "model state");
    traj.push(static_cast<double>(k) * params.dt, state);
    run = (traj.x_at(k) - traj.x_at(k - 1)).norm() <= kStationarityTolerance ? run + 1 : 0;
    if (!rec.capture_index && run >= kStationarySamples && (state.x - target).norm() <= rho_x) {
      rec.capture_index = k;
      rec.captured = true;
      if (ctx.stop_on_capture) break;
    }
    maybe_freeze();
  }

  rec.samples = traj.size();
  rec.duration = static_cast<double>(rec.samples - 1) * params.dt;
  rec.end_index = reach_end_index(traj, params.dt);
  rec.w_hat_end = state.w_hat;
  rec.final_position = state.x;
  rec.fme_at_end = fme_against(env.c, state.w_hat, env.phi);
  return rec;
}

ExperimentRecord run_experiment(const Environment& env, const ModelParams& params, const TaskConfig& config) {
  config.validate();
  params.validate();
  const double rho_x = config.rho_x.value_or(params.rho_x);

  ExperimentRecord out;
  out.config = config;
  out.params = params;
  out.env_fingerprint = environment_fingerprint(env);

  Rng target_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(Stream::Targets)}));
  Rng noise_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(Stream::Noise)}));
  Rng init_rng(derive_seed(config.seed, {static_cast<std::uint64_t>(Stream::Init)}));

  ModelState state = initial_state(env, params, init_rng, config.center);
  bool frozen = false;
  out.sessions.resize(static_cast<std::size_t>(config.sessions));
  out.metrics.reserve(static_cast<std::size_t>(config.total_trials()));

  std::size_t index = 0;
  for (int s = 0; s < config.sessions; ++s) {
    if (s > 0) {
      state.x = config.center;
      state.u.setZero();
      state.delta_q.setZero();
    }
    Vector current = config.center;
    auto& session = out.sessions[static_cast<std::size_t>(s)];
    session.reserve(static_cast<std::size_t>(config.trials_per_session));
    for (int t = 0; t < config.trials_per_session; ++t, ++index) {
      const Vector target = next_target(target_rng, current, config.targets);
      TrialContext ctx;
      ctx.session = s;
      ctx.trial = t;
      ctx.freeze_fme_threshold = config.freeze_fme_threshold;
      if (!config.trial_durations.empty()) {
        ctx.duration = config.trial_durations[index];
        ctx.stop_on_capture = false;
      } else if (config.mode == TrialMode::Capture) {
        ctx.duration = config.t_max;
        ctx.stop_on_capture = true;
      } else {
        ctx.duration = config.trial_time;
        ctx.stop_on_capture = false;
      }
      const bool was_frozen = frozen;
      TrialRecord rec = run_trial(state, env, params, ctx, target, rho_x, noise_rng, frozen);
      if (frozen && !was_frozen) out.frozen_at_trial = index;
      out.metrics.push_back(MetricRow{s, t, compute_trial_metrics(rec, env, rho_x)});
      if (!config.keep_trajectories) rec.trajectory = Trajectory{};
      session.push_back(std::move(rec));
      current = target;
    }
  }
  return out;
}

std::string environment_fingerprint(const Environment& env) {
  auto bytes = [](const Matrix& a) {
    std::string s;
    const auto rows = static_cast<std::int64_t>(a.rows());
    const auto cols = static_cast<std::int64_t>(a.cols());
    s.append(reinterpret_cast<const char*>(&rows), sizeof rows);
    s.append(reinterpret_cast<const char*>(&cols), sizeof cols);
    s.append(reinterpret_cast<const char*>(a.data()), sizeof(double) * static_cast<std::size_t>(a.size()));
    return s;
  };
  return sha256_hex(bytes(env.c)).substr(0, 16) + ":" + sha256_hex(bytes(env.phi)).substr(0, 16);
}

}  // namespace hml
