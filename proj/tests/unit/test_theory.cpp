#include "hml/error.hpp"
#include "hml/task.hpp"
#include "hml/theory.hpp"

#include "support.hpp"

#include <Eigen/Eigenvalues>

using namespace hml;
using namespace hml::test;

namespace {

// Supremum of {theta in [lo, hi] : p(theta) < 0} on a uniform grid.
double grid_theta_c(double c, double mu, double lo, double hi, double step) {
  double last = -1.0;
  const auto n = static_cast<long>(std::llround((hi - lo) / step));
  for (long i = 0; i <= n; ++i) {
    const double t = lo + static_cast<double>(i) * step;
    if (stability_cubic(t, c, mu) < 0.0) last = t;
  }
  return last;
}

Matrix white_filtered(std::size_t m, std::size_t steps, std::uint64_t seed) {
  const ModelParams p = subject_params(1);
  Rng rng(seed);
  Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(steps));
  Vector s = Vector::Zero(static_cast<Eigen::Index>(m)), noise(static_cast<Eigen::Index>(m));
  for (std::size_t k = 0; k < steps; ++k) {
    rng.fill_normal(noise);
    s += p.dt * (-p.a * s) + std::sqrt(p.dt) * p.sigma_q * noise;
    out.col(static_cast<Eigen::Index>(k)) = s;
  }
  return out;
}

}  // namespace

TEST_CASE("stability cubic factorisation") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double t = 3 * rng.uniform(), c = 5 * rng.uniform(), mu = 5 * rng.uniform();
    const double factored = (t - 1) * (t - c) * (t - c) + mu * t;
    CHECK(stability_cubic(t, c, mu) == doctest::Approx(factored).epsilon(1e-12));
  }
}

TEST_CASE("theta_c examples") {
  for (double mu : {0.1, 1.0, 2.4581, 5.0}) {
    CHECK(stability_cubic(0.0, 1.0, mu) < 0.0);
    CHECK(theta_c(1.0, mu) >= 0.0);
  }
  CHECK(theta_c(0.0, 1.0) == 0.0);
  CHECK(stability_cubic(0.0, 0.0, 1.0) == 0.0);

  const double oracle = grid_theta_c(1.0, 2.4581, 0.0, 10.0, 1e-6);
  CHECK(std::abs(theta_c(1.0, 2.4581) - oracle) <= 2e-6);

  CHECK_THROWS_AS(theta_c(-1.0, 1.0), Error);
  CHECK_THROWS_AS(theta_c(1.0, 0.0), Error);
}

TEST_CASE("theta_c agrees with a grid scan") {
  Rng rng(2);
  for (int i = 0; i < 40; ++i) {
    const double c = 5.0 * (1.0 - rng.uniform()), mu = 5.0 * (1.0 - rng.uniform());
    const double oracle = grid_theta_c(c, mu, 0.0, 1.0, 1e-6);
    CHECK(std::abs(theta_c(c, mu) - oracle) <= 2e-6);
  }
  // Small mu with c near 1 gives a second negative interval inside [0, 1].
  const double c = 0.9, mu = 0.01;
  CHECK(std::abs(theta_c(c, mu) - grid_theta_c(c, mu, 0.0, 1.0, 1e-6)) <= 2e-6);
}

TEST_CASE("theta_c brackets the sign change") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double c = 5.0 * (1.0 - rng.uniform()), mu = 5.0 * (1.0 - rng.uniform());
    const double t = theta_c(c, mu);
    CHECK((t - 1e-9 < 0.0 || stability_cubic(t - 1e-9, c, mu) < 0.0));
    CHECK_FALSE(stability_cubic(t + 1e-9, c, mu) < 0.0);
    CHECK(t < 1.0);
  }
}

TEST_CASE("pe_level") {
  CHECK(pe_level(Matrix::Zero(5, 3000), 0.01, 10.0) == 0.0);
  const Matrix dq = white_filtered(19, 30000, 4);
  const double rich = pe_level(dq, 0.01, 100.0);
  CHECK(rich > 0.0);
  const Vector dir = Vector::Ones(19).normalized();
  CHECK(pe_level(dir * dq.row(0), 0.01, 100.0) <= 1e-12);

  // Direct Gramian oracle for a single window.
  const Matrix block = dq.leftCols(10000);
  const Matrix gram = block * block.transpose() / 10000.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  CHECK(pe_level(block.leftCols(10001), 0.01, 100.0, 10000) == doctest::Approx(eig.eigenvalues()(0)).epsilon(1e-9));

  Rng rng(5);
  const Matrix r = orthonormal_rows(rng, 19, 19);
  CHECK(pe_level(r * dq, 0.01, 100.0) == doctest::Approx(rich).epsilon(1e-8));

  CHECK_THROWS_AS(pe_level(dq.leftCols(100), 0.01, 10.0), Error);
}

TEST_CASE("timescale ratio") {
  CHECK(std::abs(timescale_ratio(subject_params(1)).epsilon - 1.06e-3) <= 1e-5);
  ModelParams p;
  p.gamma = p.eta = p.k_p = 1.0;
  CHECK(timescale_ratio(p).epsilon == 1.0);
  for (int s = 1; s <= 6; ++s) CHECK(timescale_ratio(subject_params(s)).epsilon < 0.05);
  const ModelParams s1 = subject_params(1);
  CHECK(timescale_ratio(s1).eps_u == doctest::Approx(0.0664 / 3.1742));
  CHECK(timescale_ratio(s1).eps_e == doctest::Approx(0.0664 / 1.3098));
}

TEST_CASE("Lyapunov matrix") {
  Rng rng(6);
  const Vector c_hat = random_vector(rng, 19);
  const Matrix p = lyapunov_matrix(c_hat, 2.4581, 0.02, 0.05);
  CHECK(p.rows() == 20);
  CHECK((p - p.transpose()).norm() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p);
  CHECK(eig.eigenvalues()(0) > 0.0);

  const Environment env = synthetic_env();
  const LyapunovCheck lc = lyapunov_check(env, subject_params(1), 200, 7);
  CHECK(lc.samples == 200);
  CHECK(lc.counterexamples == 0);
  CHECK(lc.min_eigenvalue > 0.0);
}

TEST_CASE("noise-free convergence") {
  const Environment env = synthetic_env();
  ModelParams p = subject_params(1);
  p.sigma_u = 0.0;
  ConvergenceSpec spec;
  spec.radius_replicates = 4;
  spec.radius_duration = 60.0;
  spec.seed = 3;
  const ConvergenceReport r = convergence_test(env, p, spec);
  CHECK(r.r_squared > 0.9);
  CHECK(r.rate > 0.0);
  CHECK(r.non_increasing);
  CHECK_FALSE(r.bound_violated);
  CHECK(r.final_error < r.initial_error);
  CHECK(r.pe_level > 0.0);
  CHECK(r.epsilon == timescale_ratio(p).epsilon);
  CHECK(r.theta_c > 0.0);
  CHECK(r.radius_by_sigma.size() == 3);

  ModelParams frozen = p;
  frozen.gamma = 0.0;
  const ConvergenceReport z = convergence_test(env, frozen, spec);
  CHECK(std::abs(z.rate) < 1e-12);
  CHECK(z.final_error == doctest::Approx(z.initial_error).epsilon(1e-12));

  ModelParams noisy = p;
  noisy.sigma_u = 0.5;
  CHECK_THROWS_AS(convergence_test(env, noisy, spec), Error);
}

TEST_CASE("residual radius grows with exploration noise") {
  const Environment env = synthetic_env();
  ModelParams p = subject_params(1);
  const Matrix w0 = Matrix::Constant(2, 4, 0.05);
  const Vector start = TaskConfig::default_center();
  const Vector target = (Vector(2) << 4.5, 4.5).finished();
  double prev = 0.0;
  for (double s : {0.2, 0.8764, 2.0}) {
    p.sigma_u = s;
    double sum = 0.0;
    for (std::uint64_t r = 0; r < 4; ++r) sum += residual_radius(env, p, w0, start, target, 60.0, r);
    CHECK(sum / 4 > prev);
    prev = sum / 4;
  }
}
