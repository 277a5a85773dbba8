#pragma once

#include "hml/linalg.hpp"
#include "hml/task.hpp"

#include <optional>
#include <span>
#include <vector>

namespace hml {

// |x(end_index) - target|.
double reaching_error(const TrialRecord& trial);

// Max perpendicular distance to the start->end chord over the reach, divided by the
// chord length. Empty when the chord is shorter than 1e-9.
std::optional<double> straightness(const TrialRecord& trial);

// ||C - W_hat Phi||_2 / ||C||_2 with C = W_true Phi.
double fme(const Matrix& w_hat, const Matrix& w_true, const Matrix& phi);
// Same ratio against an explicit ground-truth C (which may lie outside span(Phi)).
double fme_against(const Matrix& c, const Matrix& w_hat, const Matrix& phi);

// Cheap FME for repeated evaluation against one environment; relies on orthonormal
// rows of Phi so the Gram of (C_hat - C) reduces to n x n products of weights.
class FmeTracker {
 public:
  explicit FmeTracker(const Environment& env);
  double operator()(const Matrix& w_hat) const;

 private:
  Matrix w_;
  Matrix cct_;
  double c_norm_;
};

struct EffortSplit {
  double driving = 0.0;      // |P u|, P the projector onto the row space of W_hat Phi
  double exploratory = 0.0;  // |(I - P) u|
};

EffortSplit effort_split(const Vector& u, const Matrix& w_hat, const Matrix& phi);

// Index of the largest |u|; the earliest index on ties.
std::size_t ballistic_end(const TrialRecord& trial);

struct SpeedAccuracy {
  double speed = 0.0;  // capture time, or the trial budget when uncaptured
  bool captured = false;
  double accuracy = 0.0;  // RMS distance to the start->target chord
};

// Throws DegenerateChord when the start lies within 1e-9 of the target.
SpeedAccuracy speed_accuracy(const TrialRecord& trial, double rho_x);

// Trailing mean; the first k < window entries average what is available.
std::vector<double> moving_average(std::span<const double> series, std::size_t window = 10);

struct ProportionEstimate {
  std::size_t successes = 0;
  std::size_t trials = 0;
  double p = 0.0;
  double lo = 0.0;  // Wilson 95% interval
  double hi = 0.0;
};

ProportionEstimate wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

// Fraction of replicate trials whose cursor is within rho_x of the target at time T
// (clamped to the recorded trajectory).
ProportionEstimate success_probability(std::span<const TrialRecord> replicates, double rho_x, double time);

// All per-trial metrics; efforts are evaluated at the ballistic end.
TrialMetrics compute_trial_metrics(const TrialRecord& trial, const Environment& env, double rho_x);

}  // namespace hml
