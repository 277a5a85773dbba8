#pragma once

#include "hml/linalg.hpp"
#include "hml/model.hpp"
#include "hml/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hml {

inline constexpr double kStationarityTolerance = 0.0025;  // screen units per sample
inline constexpr std::size_t kStationarySamples = 15;     // consecutive small displacements
inline constexpr double kReachWindow = 2.0;               // seconds after movement onset
inline constexpr double kOnsetFraction = 0.01;            // of the trial's peak |u|

enum class TrialMode { Capture, FixedDuration };

struct TaskConfig {
  std::vector<Vector> targets = default_targets();
  Vector center = default_center();
  int sessions = 8;
  int trials_per_session = 60;
  TrialMode mode = TrialMode::Capture;
  double t_max = 2.0;       // capture-mode cap, s
  double trial_time = 1.2;  // fixed-duration length, s
  std::optional<double> rho_x;  // overrides ModelParams::rho_x when set
  std::uint64_t seed = 1;
  // Per-trial durations (s) in experiment order; when non-empty every trial runs for
  // exactly its listed duration. Used to match simulated trials to recorded ones.
  std::vector<double> trial_durations;
  // Satisficing: forward learning is switched off for good once FME <= threshold.
  std::optional<double> freeze_fme_threshold;
  bool keep_trajectories = false;

  static std::vector<Vector> default_targets();
  static Vector default_center();

  int total_trials() const { return sessions * trials_per_session; }
  void validate() const;
};

// Full-resolution record of one trial, one sample per integration step (sample 0 is the
// trial start). Per-sample vectors are stored contiguously.
struct Trajectory {
  std::size_t n = 0, m = 0, h = 0;
  std::vector<double> t;
  std::vector<double> x;        // N * n
  std::vector<double> u;        // N * m
  std::vector<double> delta_q;  // N * m
  std::vector<double> w_hat;    // N * n * h, column-major per sample

  std::size_t size() const { return t.size(); }
  void reset(std::size_t n_, std::size_t m_, std::size_t h_, std::size_t reserve);
  void push(double time, const ModelState& s);

  Eigen::Map<const Vector> x_at(std::size_t i) const;
  Eigen::Map<const Vector> u_at(std::size_t i) const;
  Eigen::Map<const Vector> delta_q_at(std::size_t i) const;
  Eigen::Map<const Matrix> w_hat_at(std::size_t i) const;
  // n x N view of all positions.
  Eigen::Map<const Matrix> positions() const;
};

struct TrialRecord {
  Vector target;
  Vector start;
  Trajectory trajectory;  // dropped by run_experiment unless trajectories are kept
  std::size_t samples = 0;
  std::size_t end_index = 0;  // end-of-reach sample used for RE and SoT
  bool captured = false;
  std::optional<std::size_t> capture_index;
  double dt = 0.01;
  double budget = 2.0;  // time cap of this trial, s
  double duration = 0.0;
  double fme_at_end = 0.0;
  Matrix w_hat_end;
  Vector final_position;
};

struct TrialMetrics {
  double re = 0.0;
  double sot = 0.0;  // NaN when the chord is degenerate
  double fme = 0.0;
  double speed = 0.0;  // capture time, or the trial budget when uncaptured
  double accuracy = 0.0;
  double driving_effort = 0.0;
  double exploratory_effort = 0.0;
  bool captured = false;
};

struct MetricRow {
  int session = 0;
  int trial = 0;
  TrialMetrics metrics;
};

struct ExperimentRecord {
  TaskConfig config;
  ModelParams params;
  std::string env_fingerprint;
  std::vector<std::vector<TrialRecord>> sessions;
  std::vector<MetricRow> metrics;
  std::optional<std::size_t> frozen_at_trial;  // satisficing: first trial run without learning
};

// Uniform draw over targets other than `current` (matched within 1e-12).
Vector next_target(Rng& rng, const Vector& current, const std::vector<Vector>& targets);

// `window` holds positions as columns, oldest first. True when every consecutive
// displacement is <= 0.0025 and the newest position lies within rho_x of the target.
bool capture_check(const Eigen::Ref<const Matrix>& window, const Vector& target, double rho_x);

// End-of-reach rule: the first sample completing 15 stationary displacements, or 2 s
// after movement onset, whichever is earlier (bounded by the last sample).
std::size_t reach_end_index(const Trajectory& traj, double dt);

// First sample whose |u| exceeds 1% of the trial's peak |u| (0 when u is identically 0).
std::size_t movement_onset(const Trajectory& traj);

struct TrialContext {
  int session = 0;
  int trial = 0;
  double duration = 0.0;  // seconds of simulation for this trial
  bool stop_on_capture = true;
  std::optional<double> freeze_fme_threshold;
};

// Runs one trial in place: resets e_x = target - x, steps until capture (when enabled)
// or the duration is exhausted. `learning_frozen` is updated when a freeze threshold is
// reached.
TrialRecord run_trial(ModelState& state, const Environment& env, const ModelParams& params,
                      const TrialContext& ctx, const Vector& target, double rho_x, Rng& noise,
                      bool& learning_frozen);

ExperimentRecord run_experiment(const Environment& env, const ModelParams& params, const TaskConfig& config);

// Stream indices used to derive per-purpose generators from TaskConfig::seed.
enum class Stream : std::uint64_t { Targets = 1, Noise = 2, Init = 3 };

std::string environment_fingerprint(const Environment& env);

}  // namespace hml
