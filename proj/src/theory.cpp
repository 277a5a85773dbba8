#include "hml/theory.hpp"

#include "hml/error.hpp"
#include "hml/parallel.hpp"
#include "hml/rng.hpp"
#include "hml/task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hml {

double stability_cubic(double theta, double c, double mu) {
  return ((theta - (2.0 * c + 1.0)) * theta + (c * c + 2.0 * c + mu)) * theta - c * c;
}

double theta_c(double c_norm, double mu) {
  if (!(c_norm >= 0.0) || !(mu > 0.0) || !std::isfinite(c_norm) || !std::isfinite(mu))
    throw Error(ErrorKind::InvalidParams, "theta_c needs c_norm >= 0 and mu > 0");
  if (c_norm == 0.0) return 0.0;
  const double c = c_norm;
  auto p = [&](double t) { return stability_cubic(t, c, mu); };

  // Monotone pieces of [0, 1] from the roots of p'(t) = 3t^2 - 2(2c+1)t + (c^2+2c+mu).
  std::vector<double> cuts{0.0};
  const double qa = 3.0, qb = -2.0 * (2.0 * c + 1.0), qc = c * c + 2.0 * c + mu;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc > 0.0) {
    const double s = std::sqrt(disc);
    const double q = -0.5 * (qb - s);  // qb < 0, so this avoids cancellation
    for (double r : {q / qa, qc / q})
      if (r > 0.0 && r < 1.0) cuts.push_back(r);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(1.0);

  // The rightmost - to + crossing bounds the negative set; p(1) = mu > 0.
  for (std::size_t k = cuts.size() - 1; k-- > 0;) {
    double lo = cuts[k], hi = cuts[k + 1];
    if (!(p(lo) < 0.0) || p(hi) < 0.0) continue;
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      (p(mid) < 0.0 ? lo : hi) = mid;
    }
    return lo;
  }
  return 0.0;
}

double pe_level(const Matrix& samples, double dt, double window, std::size_t hop) {
  if (!(dt > 0.0) || !(window > 0.0)) throw Error(ErrorKind::InvalidConfig, "dt and window must be positive");
  const auto w = static_cast<std::size_t>(std::llround(window / dt));
  const auto total = static_cast<std::size_t>(samples.cols());
  if (w == 0 || total <= w)
    throw Error(ErrorKind::WindowTooLong, "window of " + std::to_string(w) + " samples needs a longer record than " +
                                              std::to_string(total));
  if (hop == 0) hop = std::max<std::size_t>(1, w / 2);
  double level = std::numeric_limits<double>::infinity();
  for (std::size_t begin = 0; begin + w <= total; begin += hop) {
    const auto block = samples.middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(w));
    const Matrix gram = (block * block.transpose()) * (dt / (static_cast<double>(w) * dt));
    const SymmetricEigen eig = jacobi_eigen(gram);
    level = std::min(level, eig.values(eig.values.size() - 1));
  }
  return std::max(level, 0.0);
}

TimescaleRatio timescale_ratio(const ModelParams& p) {
  TimescaleRatio r;
  r.epsilon = p.gamma * p.gamma / (p.eta * p.k_p);
  r.eps_u = p.gamma / p.eta;
  r.eps_e = p.gamma / p.k_p;
  return r;
}

Matrix lyapunov_matrix(const Vector& c_hat, double mu, double eps_u, double eps_e) {
  const auto m = c_hat.size();
  const Matrix cbar = c_hat * c_hat.transpose() + mu * Matrix::Identity(m, m);
  const Vector k = cbar.ldlt().solve(c_hat);  // Cb^-1 c_hat^T
  Matrix p(m + 1, m + 1);
  p.topLeftCorner(m, m) = eps_u * Matrix::Identity(m, m);
  p.topRightCorner(m, 1) = -eps_u * k;
  p.bottomLeftCorner(1, m) = -eps_u * k.transpose();
  p(m, m) = 2.0 * eps_e + eps_u * k.squaredNorm();
  return p;
}

namespace {

std::vector<double> row_bounds(const Environment& env, double mu) {
  std::vector<double> b(env.n());
  for (std::size_t i = 0; i < env.n(); ++i)
    b[i] = std::min(mu, theta_c(env.c.row(static_cast<Eigen::Index>(i)).norm(), mu));
  return b;
}

Vector random_direction(Rng& rng, Eigen::Index size) {
  Vector v(size);
  do rng.fill_normal(v);
  while (v.norm() == 0.0);
  return v / v.norm();
}

ModelState start_state(const Environment& env, const Matrix& w_tilde, const Vector& start, const Vector& target) {
  ModelState s;
  s.delta_q = Vector::Zero(static_cast<Eigen::Index>(env.m()));
  s.u = Vector::Zero(static_cast<Eigen::Index>(env.m()));
  s.w_hat = env.w_true + w_tilde;
  s.x = start;
  s.e_x = target - start;
  return s;
}

Vector default_or(const Vector& v, Vector fallback) { return v.size() ? v : fallback; }

}  // namespace

LyapunovCheck lyapunov_check(const Environment& env, const ModelParams& p, std::size_t samples, std::uint64_t seed) {
  const TimescaleRatio eps = timescale_ratio(p);
  const std::vector<double> bounds = row_bounds(env, p.mu);
  Rng rng(seed);
  LyapunovCheck out;
  out.samples = samples;
  out.min_eigenvalue = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < samples; ++k) {
    const std::size_t row = rng.index(env.n());
    const Vector c_row = env.c.row(static_cast<Eigen::Index>(row)).transpose();
    const Vector c_hat = c_row + random_direction(rng, c_row.size()) * (rng.uniform() * bounds[row]);
    const SymmetricEigen eig = jacobi_eigen(lyapunov_matrix(c_hat, p.mu, eps.eps_u, eps.eps_e));
    const double lo = eig.values(eig.values.size() - 1);
    out.min_eigenvalue = std::min(out.min_eigenvalue, lo);
    if (!(lo > 0.0)) ++out.counterexamples;
  }
  return out;
}

double residual_radius(const Environment& env, const ModelParams& params, const Matrix& initial_error,
                       const Vector& start, const Vector& target, double duration, std::uint64_t seed) {
  params.validate();
  ModelState s = start_state(env, initial_error, start, target);
  Stepper stepper(env, params);
  Rng rng(seed);
  const auto steps = static_cast<std::size_t>(std::llround(duration / params.dt));
  const std::size_t burn_in = steps / 2;
  double acc = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    if (!stepper.step(s, rng)) throw NonFiniteStateError(-1, -1, k, "state");
    if (k + 1 > burn_in)
      acc += (s.w_hat - env.w_true).squaredNorm() + s.u.squaredNorm() + s.e_x.squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(steps - burn_in));
}

ConvergenceReport convergence_test(const Environment& env, const ModelParams& params, const ConvergenceSpec& spec) {
  params.validate();
  if (params.sigma_u != 0.0) throw Error(ErrorKind::InvalidParams, "convergence test needs sigma_u = 0");
  if (!(params.sigma_q > 0.0)) throw Error(ErrorKind::InvalidParams, "convergence test needs sigma_q > 0");
  if (!(spec.duration > 0.0) || !(spec.fit_fraction > 0.0) || spec.fit_fraction > 1.0)
    throw Error(ErrorKind::InvalidConfig, "invalid convergence run length or fit window");
  if (spec.radius_replicates < 1) throw Error(ErrorKind::InvalidConfig, "radius replicates must be >= 1");

  const Vector start = default_or(spec.start, TaskConfig::default_center());
  Vector fallback_target(2);
  fallback_target << 4.5, 4.5;
  const Vector target = default_or(spec.target, fallback_target);
  if (start.size() != static_cast<Eigen::Index>(env.n()) || target.size() != start.size())
    throw Error(ErrorKind::DimensionMismatch, "start/target dimension differs from the cursor dimension");

  ConvergenceReport rep;
  const std::vector<double> bounds = row_bounds(env, params.mu);
  rep.binding_row = static_cast<std::size_t>(std::min_element(bounds.begin(), bounds.end()) - bounds.begin());
  rep.theta_c = theta_c(env.c.row(static_cast<Eigen::Index>(rep.binding_row)).norm(), params.mu);
  rep.epsilon = timescale_ratio(params).epsilon;

  Matrix w_tilde0;
  if (spec.initial_error) {
    w_tilde0 = *spec.initial_error;
    require_same_shape(w_tilde0, env.w_true, "initial weight error");
  } else {
    Rng init(derive_seed(spec.seed, {2}));
    w_tilde0 = Matrix::Zero(env.w_true.rows(), env.w_true.cols());
    for (Eigen::Index i = 0; i < w_tilde0.rows(); ++i)
      w_tilde0.row(i) = random_direction(init, w_tilde0.cols()).transpose() *
                        (spec.bound_fraction * bounds[static_cast<std::size_t>(i)]);
  }
  for (Eigen::Index i = 0; i < w_tilde0.rows(); ++i)
    if ((w_tilde0.row(i) * env.phi).norm() > bounds[static_cast<std::size_t>(i)]) rep.bound_violated = true;

  // Noise-free decay.
  const auto steps = static_cast<std::size_t>(std::llround(spec.duration / params.dt));
  ModelState s = start_state(env, w_tilde0, start, target);
  Stepper stepper(env, params);
  Rng rng(derive_seed(spec.seed, {0}));
  std::vector<double> norms(steps + 1);
  Matrix dq(static_cast<Eigen::Index>(env.m()), static_cast<Eigen::Index>(steps));
  norms[0] = w_tilde0.norm();
  for (std::size_t k = 0; k < steps; ++k) {
    if (!stepper.step(s, rng)) throw NonFiniteStateError(-1, -1, k, "state");
    norms[k + 1] = (s.w_hat - env.w_true).norm();
    dq.col(static_cast<Eigen::Index>(k)) = s.delta_q;
    if (norms[k + 1] > norms[k]) {
      const double rel = (norms[k + 1] - norms[k]) / norms[k];
      rep.max_relative_increase = std::max(rep.max_relative_increase, rel);
      if (rel > 1e-12) rep.non_increasing = false;
    }
  }
  rep.initial_error = norms.front();
  rep.final_error = norms.back();

  const auto first = static_cast<std::size_t>(std::floor(static_cast<double>(steps) * (1.0 - spec.fit_fraction)));
  if (norms[first] > 0.0 && norms.back() > 0.0) {
    double st = 0, sy = 0;
    const double count = static_cast<double>(steps + 1 - first);
    for (std::size_t k = first; k <= steps; ++k) {
      st += static_cast<double>(k) * params.dt;
      sy += std::log(norms[k]);
    }
    const double tm = st / count, ym = sy / count;
    double stt = 0, sty = 0, syy = 0;
    for (std::size_t k = first; k <= steps; ++k) {
      const double dt = static_cast<double>(k) * params.dt - tm, dy = std::log(norms[k]) - ym;
      stt += dt * dt;
      sty += dt * dy;
      syy += dy * dy;
    }
    const double slope = sty / stt;
    rep.rate = -slope;
    rep.r_squared = syy > 0.0 ? std::clamp(sty * sty / (stt * syy), 0.0, 1.0) : 1.0;
  } else {
    rep.rate = 0.0;
    rep.r_squared = 1.0;
  }
  rep.pe_level = pe_level(dq, params.dt, std::min(spec.pe_window, 0.5 * spec.duration));

  // Noise ball: common replicate seeds across the sigma_u grid.
  rep.sigma_u_grid = spec.sigma_u_grid;
  std::vector<double> grid = spec.sigma_u_grid;
  const bool reported_in_grid =
      std::find(grid.begin(), grid.end(), spec.noise_sigma_u) != grid.end();
  if (!reported_in_grid) grid.push_back(spec.noise_sigma_u);
  const auto reps = static_cast<std::size_t>(spec.radius_replicates);
  std::vector<double> radii(grid.size() * reps);
  parallel_for(radii.size(), spec.threads, [&](std::size_t idx) {
    ModelParams noisy = params;
    noisy.sigma_u = grid[idx / reps];
    radii[idx] = residual_radius(env, noisy, w_tilde0, start, target, spec.radius_duration,
                                 derive_seed(spec.seed, {1, idx % reps}));
  });
  std::vector<double> means(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (std::size_t r = 0; r < reps; ++r) acc += radii[g * reps + r];
    means[g] = acc / static_cast<double>(reps);
  }
  rep.radius_by_sigma.assign(means.begin(), means.begin() + static_cast<std::ptrdiff_t>(spec.sigma_u_grid.size()));
  rep.residual_radius = means[static_cast<std::size_t>(
      std::find(grid.begin(), grid.end(), spec.noise_sigma_u) - grid.begin())];
  rep.radius_increasing = rep.radius_by_sigma.size() >= 2;
  for (std::size_t g = 1; g < rep.radius_by_sigma.size(); ++g)
    if (!(rep.radius_by_sigma[g] > rep.radius_by_sigma[g - 1])) rep.radius_increasing = false;
  return rep;
}

}  // namespace hml
