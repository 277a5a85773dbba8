#pragma once

#include "hml/linalg.hpp"
#include "hml/model.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace hml {

// p(theta) = theta^3 - theta^2 (2c + 1) + theta (c^2 + 2c + mu) - c^2
double stability_cubic(double theta, double c_norm, double mu);

// Largest theta >= 0 with p(theta) < 0 (supremum of the whole negative set). Zero when
// c_norm = 0. Since p(theta) = (theta - 1)(theta - c)^2 + mu theta, the set lies in [0, 1).
double theta_c(double c_norm, double mu);

// Minimum over sliding windows of lambda_min((1/T_w) sum dq dq^T dt). `samples` holds one
// delta_q per column at spacing dt. `hop` defaults to half a window. Throws WindowTooLong
// when the record is not longer than one window.
double pe_level(const Matrix& samples, double dt, double window, std::size_t hop = 0);

struct TimescaleRatio {
  double epsilon = 0.0;  // gamma^2 / (eta k_p)
  double eps_u = 0.0;    // gamma / eta
  double eps_e = 0.0;    // gamma / k_p
};

TimescaleRatio timescale_ratio(const ModelParams& p);

// Boundary-layer Lyapunov matrix for one cursor axis with frozen estimate row c_hat:
// [[eps_u I, -eps_u Cb^-1 c_hat^T], [-eps_u c_hat Cb^-1, 2 eps_e + eps_u c_hat Cb^-2 c_hat^T]],
// Cb = c_hat^T c_hat + mu I.
Matrix lyapunov_matrix(const Vector& c_hat, double mu, double eps_u, double eps_e);

struct LyapunovCheck {
  std::size_t samples = 0;
  std::size_t counterexamples = 0;  // samples with lambda_min(P) <= 0
  double min_eigenvalue = 0.0;
};

// Samples frozen estimates C_hat = C + C_tilde with ||C_tilde row|| inside the stability
// bound and records the smallest eigenvalue of P seen.
LyapunovCheck lyapunov_check(const Environment& env, const ModelParams& p, std::size_t samples, std::uint64_t seed);

struct ConvergenceSpec {
  double duration = 300.0;      // noise-free decay run, s
  double fit_fraction = 0.8;    // final share of the run used by the log-linear fit
  double bound_fraction = 0.5;  // ||W_tilde(0) row|| as a share of min(mu, theta_c)
  Vector start;                 // defaults to the task center
  Vector target;                // defaults to (4.5, 4.5)
  double pe_window = 10.0;
  std::vector<double> sigma_u_grid{0.2, 0.8764, 2.0};
  double noise_sigma_u = 0.8764;  // noise level reported as residual_radius
  int radius_replicates = 32;
  double radius_duration = 200.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  // Optional explicit initial error (n x h); overrides the bound-scaled draw.
  std::optional<Matrix> initial_error;
};

struct ConvergenceReport {
  double rate = 0.0;       // fitted decay rate of ||W_tilde||, 1/s
  double r_squared = 0.0;  // of the log-linear fit
  double pe_level = 0.0;
  double theta_c = 0.0;    // of the binding row
  double epsilon = 0.0;
  double residual_radius = 0.0;
  std::size_t binding_row = 0;  // row with the smallest min(mu, theta_c)
  bool bound_violated = false;  // some row of W_tilde(0) outside its bound
  bool non_increasing = true;   // ||W_tilde|| never grew step to step
  double max_relative_increase = 0.0;
  double initial_error = 0.0;
  double final_error = 0.0;
  std::vector<double> sigma_u_grid;
  std::vector<double> radius_by_sigma;
  bool radius_increasing = false;
};

// Free-running dynamics toward a fixed target. `params.sigma_u` must be 0 and
// `params.sigma_q` positive.
ConvergenceReport convergence_test(const Environment& env, const ModelParams& params, const ConvergenceSpec& spec);

// Long-run RMS of sqrt(||W_tilde||_F^2 + |u|^2 + |e_x|^2) over the second half of a run.
double residual_radius(const Environment& env, const ModelParams& params, const Matrix& initial_error,
                       const Vector& start, const Vector& target, double duration, std::uint64_t seed);

}  // namespace hml
