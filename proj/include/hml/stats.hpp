#pragma once

#include <cstddef>
#include <span>

namespace hml {

// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

// Upper: alternative mean(a - b) > 0. Lower: mean(a - b) < 0.
enum class Tail { Upper, Lower };

struct TTestResult {
  double t = 0.0;
  double p = 0.5;
  std::size_t df = 0;
  bool degenerate = false;  // zero variance of the differences with nonzero mean
};

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, Tail tail);

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

// Mean with a normal-approximation 95% interval; NaN entries are skipped.
MeanCi mean_ci(std::span<const double> values);

}  // namespace hml
