#pragma once

#include "hml/metrics.hpp"
#include "hml/model.hpp"
#include "hml/stats.hpp"
#include "hml/synergy.hpp"
#include "hml/task.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hml {

enum class Metric { Re, Sot, Fme, Speed, Accuracy, DrivingEffort, ExploratoryEffort };
inline constexpr std::size_t kMetricCount = 7;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics{Metric::Re,       Metric::Sot,           Metric::Fme,
                                                              Metric::Speed,    Metric::Accuracy,      Metric::DrivingEffort,
                                                              Metric::ExploratoryEffort};

std::string_view metric_name(Metric m);
Metric metric_from_name(std::string_view name);  // throws UnknownParameter
double metric_value(const TrialMetrics& t, Metric m);

struct SweepSpec {
  std::string parameter;
  std::vector<double> grid;
  int replicates = 128;
  ModelParams base;
  std::vector<Metric> outputs{kAllMetrics.begin(), kAllMetrics.end()};
  std::uint64_t seed = 1;

  void validate() const;  // UnknownParameter for a bad name
};

// Per-trial distribution of one metric at one grid value: replicate values are stored
// replicate-major (value(r, trial) = values[r * trials + trial]).
struct MetricSeries {
  Metric metric = Metric::Re;
  std::size_t trials = 0;
  std::vector<double> values;
  std::vector<MeanCi> per_trial;

  double value(std::size_t replicate, std::size_t trial) const { return values[replicate * trials + trial]; }
  // Per-trial means, the paired samples used by the effort/accuracy tests.
  std::vector<double> trial_means() const;
  // Mean over all replicates and trials (NaN skipped).
  double overall_mean() const;
};

struct SweepCell {
  double value = 0.0;
  std::vector<MetricSeries> series;  // aligned with SweepSpec::outputs

  const MetricSeries& at(Metric m) const;
};

struct SweepResult {
  SweepSpec spec;
  std::vector<SweepCell> cells;  // aligned with spec.grid
};

// Replicate r runs with seed derive_seed(spec.seed, {r}) at every grid value, so
// cells share random numbers and compare pairwise.
SweepResult sweep(const SweepSpec& spec, const Environment& env, const TaskConfig& config, unsigned threads = 1);

struct SatisficingSpec {
  std::vector<double> fme_thresholds{0.85, 0.9, 0.95, 0.98, 1.0};
  std::vector<double> rho_x{0.5, 1.0, 1.5};
  std::vector<double> trial_times{1.2};
  int replicates = 1280;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SatisficingCell {
  double fme_threshold = 0.0;
  double rho_x = 0.0;
  double trial_time = 0.0;
  ProportionEstimate success;
  double frozen_share = 0.0;  // replicates whose learning froze during the run
};

struct SatisficingResult {
  SatisficingSpec spec;
  std::vector<SatisficingCell> cells;  // threshold-major, then trial time, then rho_x

  const SatisficingCell& at(std::size_t threshold, std::size_t time, std::size_t rho) const;
};

// Fixed-duration experiments with learning switched off once FME <= threshold. Success
// is judged on the last trial of each replicate: cursor within rho_x at time T.
SatisficingResult satisficing_study(const SatisficingSpec& spec, const Environment& env, const ModelParams& params,
                                    const TaskConfig& config, unsigned threads = 1);

struct FlexibilitySpec {
  std::vector<std::size_t> synergy_counts{1, 2, 3, 4, 6, 8, 12, 19};
  std::vector<double> sigma_u{0.05, 0.1, 0.3, 0.8764, 2.0};
  int replicates = 128;
  int sessions = 4;
  std::uint64_t seed = 1;

  void validate(std::size_t joints) const;
};

struct FlexibilityCell {
  std::size_t h = 0;
  double sigma_u = 0.0;
  MeanCi fme;
  double residual = 0.0;  // ||C - C Phi^T Phi||_2 / ||C||_2
};

struct FlexibilityResult {
  FlexibilitySpec spec;
  Matrix mapping;                     // the out-of-span C used
  std::vector<FlexibilityCell> cells;  // h-major

  const FlexibilityCell& at(std::size_t h_index, std::size_t sigma_index) const;
  // Index into synergy_counts of the lowest mean FME for one sigma_u column.
  std::size_t argmin_h(std::size_t sigma_index) const;
};

// Random C with i.i.d. N(0, 1) entries rescaled to the spectral norm of `reference`.
Matrix random_mapping(std::size_t n, std::size_t m, double spectral_scale, std::uint64_t seed);

// End-of-session FME against `c` for Phi = first h principal components.
FlexibilityResult flexibility_study(const FlexibilitySpec& spec, const PcaResult& pca, const Matrix& c,
                                    const ModelParams& params, const TaskConfig& config, unsigned threads = 1);

}  // namespace hml
