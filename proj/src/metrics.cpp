#include "hml/metrics.hpp"

#include "hml/error.hpp"

#include <cmath>
#include <limits>

namespace hml {

namespace {

void require_trajectory(const TrialRecord& trial) {
  if (trial.trajectory.size() == 0)
    throw Error(ErrorKind::InvalidConfig, "trial trajectory was not recorded");
}

// Distance from p to the line through `origin` along unit direction `dir`.
double perpendicular_distance(const Vector& p, const Vector& origin, const Vector& dir) {
  const Vector d = p - origin;
  return (d - d.dot(dir) * dir).norm();
}

}  // namespace

double reaching_error(const TrialRecord& trial) {
  require_trajectory(trial);
  return (trial.trajectory.x_at(trial.end_index) - trial.target).norm();
}

std::optional<double> straightness(const TrialRecord& trial) {
  require_trajectory(trial);
  const Trajectory& traj = trial.trajectory;
  const Vector start = traj.x_at(0);
  const Vector chord = traj.x_at(trial.end_index) - start;
  const double length = chord.norm();
  if (length < 1e-9) return std::nullopt;
  const Vector dir = chord / length;
  double worst = 0.0;
  for (std::size_t i = 0; i <= trial.end_index; ++i)
    worst = std::max(worst, perpendicular_distance(traj.x_at(i), start, dir));
  return worst / length;
}

double fme(const Matrix& w_hat, const Matrix& w_true, const Matrix& phi) {
  require_same_shape(w_hat, w_true, "fme weights");
  return fme_against(w_true * phi, w_hat, phi);
}

double fme_against(const Matrix& c, const Matrix& w_hat, const Matrix& phi) {
  if (w_hat.cols() != phi.rows() || c.cols() != phi.cols() || c.rows() != w_hat.rows())
    throw Error(ErrorKind::DimensionMismatch, "fme operands disagree");
  const double c_norm = spectral_norm(c);
  if (c_norm == 0.0) throw Error(ErrorKind::ZeroTrueMapping, "||C||_2 = 0");
  return spectral_norm(c - w_hat * phi) / c_norm;
}

FmeTracker::FmeTracker(const Environment& env)
    : w_(env.c * env.phi.transpose()), cct_(env.c * env.c.transpose()), c_norm_(spectral_norm(env.c)) {
  if (c_norm_ == 0.0) throw Error(ErrorKind::ZeroTrueMapping, "||C||_2 = 0");
}

double FmeTracker::operator()(const Matrix& w_hat) const {
  // (W_hat Phi - C)(W_hat Phi - C)^T = W_hat W_hat^T - W_hat W^T - W W_hat^T + C C^T.
  const Matrix cross = w_hat * w_.transpose();
  Matrix gram = w_hat * w_hat.transpose() - cross - cross.transpose() + cct_;
  double top;
  if (gram.rows() == 2) {
    const double tr = gram(0, 0) + gram(1, 1);
    const double diff = gram(0, 0) - gram(1, 1);
    top = 0.5 * (tr + std::sqrt(diff * diff + 4.0 * gram(0, 1) * gram(0, 1)));
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
    top = solver.eigenvalues().maxCoeff();
  }
  return std::sqrt(std::max(0.0, top)) / c_norm_;
}

EffortSplit effort_split(const Vector& u, const Matrix& w_hat, const Matrix& phi) {
  if (w_hat.cols() != phi.rows() || phi.cols() != u.size())
    throw Error(ErrorKind::DimensionMismatch, "effort_split operands disagree");
  const Matrix projector = row_space_projector(w_hat * phi, 1e-10);
  const Vector driving = projector * u;
  return EffortSplit{driving.norm(), (u - driving).norm()};
}

std::size_t ballistic_end(const TrialRecord& trial) {
  require_trajectory(trial);
  std::size_t best = 0;
  double peak = -1.0;
  for (std::size_t i = 0; i < trial.trajectory.size(); ++i) {
    const double v = trial.trajectory.u_at(i).norm();
    if (v > peak) {
      peak = v;
      best = i;
    }
  }
  return best;
}

SpeedAccuracy speed_accuracy(const TrialRecord& trial, double rho_x) {
  require_trajectory(trial);
  const Trajectory& traj = trial.trajectory;
  const Vector start = traj.x_at(0);
  const Vector chord = trial.target - start;
  const double length = chord.norm();
  if (length < 1e-9) throw Error(ErrorKind::DegenerateChord, "trial starts on its target");
  const Vector dir = chord / length;

  SpeedAccuracy out;
  out.speed = trial.budget;
  std::size_t run = 0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    run = (traj.x_at(k) - traj.x_at(k - 1)).norm() <= kStationarityTolerance ? run + 1 : 0;
    if (run >= kStationarySamples && (traj.x_at(k) - trial.target).norm() <= rho_x) {
      out.speed = static_cast<double>(k) * trial.dt;
      out.captured = true;
      break;
    }
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double d = perpendicular_distance(traj.x_at(i), start, dir);
    sum += d * d;
  }
  out.accuracy = std::sqrt(sum / static_cast<double>(traj.size()));
  return out;
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
  if (window < 1) throw Error(ErrorKind::InvalidConfig, "moving average window must be >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= window) sum -= series[i - window];
    const std::size_t count = std::min(i + 1, window);
    out[i] = sum / static_cast<double>(count);
  }
  return out;
}

ProportionEstimate wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) throw Error(ErrorKind::EmptyReplicates, "no replicates");
  ProportionEstimate out;
  out.successes = successes;
  out.trials = trials;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  out.p = p;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  out.lo = std::max(0.0, center - half);
  out.hi = std::min(1.0, center + half);
  return out;
}

ProportionEstimate success_probability(std::span<const TrialRecord> replicates, double rho_x, double time) {
  if (replicates.empty()) throw Error(ErrorKind::EmptyReplicates, "no replicate trials");
  std::size_t hits = 0;
  for (const TrialRecord& r : replicates) {
    Vector position;
    if (r.trajectory.size() > 0) {
      const auto k = static_cast<std::size_t>(std::llround(time / r.dt));
      position = r.trajectory.x_at(std::min(k, r.trajectory.size() - 1));
    } else {
      position = r.final_position;
    }
    if ((position - r.target).norm() <= rho_x) ++hits;
  }
  return wilson_interval(hits, replicates.size());
}

TrialMetrics compute_trial_metrics(const TrialRecord& trial, const Environment& env, double rho_x) {
  TrialMetrics out;
  out.re = reaching_error(trial);
  out.sot = straightness(trial).value_or(std::numeric_limits<double>::quiet_NaN());
  out.fme = trial.fme_at_end;
  try {
    const SpeedAccuracy sa = speed_accuracy(trial, rho_x);
    out.speed = sa.speed;
    out.captured = sa.captured;
    out.accuracy = sa.accuracy;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateChord) throw;
    out.speed = trial.budget;
    out.captured = trial.captured;
    out.accuracy = std::numeric_limits<double>::quiet_NaN();
  }
  const std::size_t peak = ballistic_end(trial);
  const EffortSplit effort = effort_split(trial.trajectory.u_at(peak), trial.trajectory.w_hat_at(peak), env.phi);
  out.driving_effort = effort.driving;
  out.exploratory_effort = effort.exploratory;
  return out;
}

}  // namespace hml
