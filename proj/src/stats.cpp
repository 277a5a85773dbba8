#include "hml/stats.hpp"

#include "hml/error.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace hml {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

// Upper-tail probability P(T > |t|) for the given df, shared by both tails so that
// swapping the samples and the tail reproduces the same bits.
double upper_tail_abs(double t_abs, double df) {
  if (std::isinf(t_abs)) return 0.0;
  const double x = df / (df + t_abs * t_abs);
  return 0.5 * incomplete_beta(0.5 * df, 0.5, x);
}

double tail_probability(double t, double df, Tail tail) {
  const bool toward = tail == Tail::Upper ? t >= 0.0 : t <= 0.0;
  const double small = upper_tail_abs(std::abs(t), df);
  return toward ? small : 1.0 - small;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::InvalidConfig, "incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorKind::InvalidConfig, "degrees of freedom must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  const double upper = upper_tail_abs(std::abs(t), df);
  return t >= 0.0 ? 1.0 - upper : upper;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b, Tail tail) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "paired samples differ in length");
  if (a.size() < 2) throw Error(ErrorKind::InvalidConfig, "paired t-test needs at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    sum += d[i];
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult out;
  out.df = n - 1;
  if (sd == 0.0) {
    if (mean == 0.0) {
      out.t = 0.0;
      out.p = 0.5;
    } else {
      out.degenerate = true;
      out.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
      out.p = tail_probability(out.t, static_cast<double>(out.df), tail);
    }
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  out.p = tail_probability(out.t, static_cast<double>(out.df), tail);
  return out;
}

MeanCi mean_ci(std::span<const double> values) {
  MeanCi out;
  double sum = 0.0;
  for (double v : values)
    if (!std::isnan(v)) {
      sum += v;
      ++out.count;
    }
  if (out.count == 0) {
    out.mean = out.lo = out.hi = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.mean = sum / static_cast<double>(out.count);
  double ss = 0.0;
  for (double v : values)
    if (!std::isnan(v)) ss += (v - out.mean) * (v - out.mean);
  const double sd = out.count > 1 ? std::sqrt(ss / static_cast<double>(out.count - 1)) : 0.0;
  const double half = 1.959963984540054 * sd / std::sqrt(static_cast<double>(out.count));
  out.lo = out.mean - half;
  out.hi = out.mean + half;
  return out;
}

}  // namespace hml
