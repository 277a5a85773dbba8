#include "hml/error.hpp"
#include "hml/rng.hpp"
#include "hml/stats.hpp"

#include "doctest.h"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <vector>

using namespace hml;

TEST_CASE("incomplete_beta matches Boost") {
  Rng rng(1);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double a = 0.05 + 60.0 * rng.uniform(), b = 0.05 + 60.0 * rng.uniform(), x = rng.uniform();
    worst = std::max(worst, std::abs(incomplete_beta(a, b, x) - boost::math::ibeta(a, b, x)));
  }
  CHECK(worst < 1e-10);
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("student_t_cdf matches Boost and tabulated quantiles") {
  Rng rng(2);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double df = 1.0 + std::floor(200.0 * rng.uniform());
    const double t = 12.0 * (rng.uniform() - 0.5);
    boost::math::students_t dist(df);
    worst = std::max(worst, std::abs(student_t_cdf(t, df) - boost::math::cdf(dist, t)));
  }
  CHECK(worst < 1e-10);
  // Two-sided 95% critical values.
  CHECK(student_t_cdf(12.706204736, 1) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(student_t_cdf(2.570581836, 5) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(student_t_cdf(1.983971519, 100) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(student_t_cdf(0.0, 7) == 0.5);
  CHECK(student_t_cdf(-3.0, 4) == doctest::Approx(1.0 - student_t_cdf(3.0, 4)));
}

TEST_CASE("paired_t_test examples") {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.5};
  const TTestResult same = paired_t_test(a, a, Tail::Upper);
  CHECK(same.t == 0.0);
  CHECK(same.p == 0.5);

  const std::vector<double> zeros(4, 0.0), ones(4, 1.0);
  const TTestResult flat = paired_t_test(ones, zeros, Tail::Upper);
  CHECK(flat.degenerate);
  CHECK(flat.p == 0.0);
  CHECK(paired_t_test(ones, zeros, Tail::Lower).p == 1.0);

  const std::vector<double> d{1.2, 0.8, 1.1, 0.9, 1.0}, z(5, 0.0);
  const TTestResult r = paired_t_test(d, z, Tail::Upper);
  CHECK(r.df == 4);
  CHECK(r.t == doctest::Approx(std::sqrt(5.0) * 1.0 / std::sqrt(0.025)));
  CHECK(r.t == doctest::Approx(14.142).epsilon(1e-4));
  CHECK(r.p < 0.001);
  boost::math::students_t dist(4.0);
  CHECK(r.p == doctest::Approx(boost::math::cdf(boost::math::complement(dist, r.t))).epsilon(1e-9));

  CHECK_THROWS_AS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}, Tail::Upper), Error);
  CHECK_THROWS_AS(paired_t_test(d, a, Tail::Upper), Error);
}

TEST_CASE("paired_t_test is antisymmetric") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> a(12), b(12);
    for (int k = 0; k < 12; ++k) {
      a[static_cast<std::size_t>(k)] = rng.normal();
      b[static_cast<std::size_t>(k)] = rng.normal() + 0.3;
    }
    const TTestResult ab = paired_t_test(a, b, Tail::Upper);
    const TTestResult ba = paired_t_test(b, a, Tail::Lower);
    CHECK(ab.p == doctest::Approx(ba.p).epsilon(1e-14));
    CHECK(ab.t == doctest::Approx(-ba.t));
    CHECK(paired_t_test(a, b, Tail::Upper).p + paired_t_test(a, b, Tail::Lower).p == doctest::Approx(1.0));
  }
}

TEST_CASE("mean_ci") {
  const std::vector<double> v{1.0, 2.0, 3.0, NAN, 4.0};
  const MeanCi ci = mean_ci(v);
  CHECK(ci.count == 4);
  CHECK(ci.mean == 2.5);
  const double sd = std::sqrt(5.0 / 3.0);
  CHECK(ci.hi - ci.mean == doctest::Approx(1.96 * sd / 2.0));
  CHECK(ci.mean - ci.lo == doctest::Approx(1.96 * sd / 2.0));

  Rng rng(4);
  std::vector<double> small(128), large(512);
  for (auto& x : small) x = rng.normal();
  for (auto& x : large) x = rng.normal();
  const MeanCi s = mean_ci(small), l = mean_ci(large);
  CHECK(l.hi - l.lo < s.hi - s.lo);
}
