#pragma once

#include "hml/model.hpp"
#include "hml/task.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace hml {

// Searched parameters in genome order; `a` stays fixed.
inline constexpr std::array<std::string_view, 6> kFitParameters{"gamma", "eta", "mu", "k_p", "sigma_u", "sigma_q"};

struct ParamBounds {
  std::vector<double> low{1e-4, 0.1, 0.1, 0.1, 0.01, 1e-3};
  std::vector<double> high{1.0, 10.0, 10.0, 10.0, 5.0, 2.0};

  std::size_t size() const { return low.size(); }
  void validate() const;
  bool contains(std::span<const double> genome) const;
  bool operator==(const ParamBounds&) const = default;
};

struct Individual {
  std::vector<double> genome;
  std::vector<double> objectives;  // (f_RE, f_SoT) for model fits
  int rank = 0;                    // 0 = first front
  double crowding = 0.0;

  bool operator==(const Individual&) const = default;
};

// a <= b everywhere and a < b somewhere (minimization).
bool dominates(std::span<const double> a, std::span<const double> b);

// Fronts of indices, best first; members of each front keep ascending index order.
std::vector<std::vector<std::size_t>> nondominated_sort(const std::vector<std::vector<double>>& objectives);

// Crowding distance of each member of `front` (aligned with it). Boundary members of every
// objective get +inf; objectives with zero or non-finite range contribute 0.
std::vector<double> crowding_distance(const std::vector<std::vector<double>>& objectives,
                                      std::span<const std::size_t> front);

struct VariationOptions {
  double crossover_rate = 0.7;
  double mutation_rate = 0.2;  // per gene
  double eta_c = 15.0;
  double eta_m = 20.0;
};

// Bounded simulated binary crossover. With probability 1 - rate the children are the
// parents unchanged.
std::pair<std::vector<double>, std::vector<double>> sbx_crossover(const std::vector<double>& p1,
                                                                  const std::vector<double>& p2,
                                                                  const ParamBounds& bounds, Rng& rng,
                                                                  double rate = 0.7, double eta_c = 15.0);

// Bounded polynomial mutation; each gene mutates with probability `rate`.
std::vector<double> polynomial_mutation(const std::vector<double>& genome, const ParamBounds& bounds, Rng& rng,
                                        double rate = 0.2, double eta_m = 20.0);

// 2-D hypervolume of the nondominated subset of `points` relative to `reference`
// (points not strictly better than the reference in both objectives are ignored).
double hypervolume_2d(const std::vector<std::vector<double>>& points, const std::array<double, 2>& reference);

struct Nsga2Options {
  std::size_t population = 100;
  int generations = 500;
  VariationOptions variation;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

// Objective callback; the seed is derived from (master seed, generation, index).
using Evaluator = std::function<std::vector<double>(const std::vector<double>& genome, std::uint64_t seed)>;
// Called with the population after initialisation (generation 0) and after every
// generation.
using GenerationObserver = std::function<void(int generation, const std::vector<Individual>& population)>;

struct Nsga2Result {
  std::vector<Individual> front;       // final nondominated front
  std::vector<Individual> population;  // final population, ranked
  std::size_t evaluations = 0;
};

// Evaluator failures (hml::Error) and non-finite values become +inf objectives.
Nsga2Result nsga2(const ParamBounds& bounds, const Evaluator& evaluate, const Nsga2Options& options,
                  const GenerationObserver& observer = {});

// --- model fitting ---------------------------------------------------------------

// Per-trial reference sequences in experiment order.
struct ReferenceData {
  int sessions = 0;
  int trials_per_session = 0;
  std::vector<double> re;
  std::vector<double> sot;        // NaN entries count as 0
  std::vector<double> durations;  // s, from the speed column
};

// Rows must form a complete sessions x trials grid in order.
ReferenceData reference_from_metrics(std::span<const MetricRow> rows);

std::vector<double> genome_from_params(const ModelParams& p);
ModelParams params_from_genome(std::span<const double> genome, const ModelParams& base);

// (f_RE, f_SoT): Euclidean distances between 10-trial moving averages of the simulated
// and reference sequences. The simulation reuses the reference trial durations. A
// diverging simulation scores +inf on both.
std::array<double, 2> fit_objectives(const ModelParams& params, const ReferenceData& reference, const Environment& env,
                                     const TaskConfig& base, std::uint64_t seed);

struct FitProvenance {
  std::uint64_t seed = 0;
  int generations = 0;
  std::size_t population = 0;
  std::size_t evaluations = 0;
};

struct FitResult {
  std::vector<Individual> pareto_front;
  ModelParams chosen;                  // minimum f_RE member of the front
  std::vector<double> chosen_objectives;
  FitProvenance provenance;
};

struct FitOptions {
  ParamBounds bounds;
  Nsga2Options nsga;  // nsga.seed is the master seed of the whole fit
  int runs = 10;
  ModelParams base;   // fixed (non-searched) parameters
  TaskConfig task;    // targets, center, rho_x
};

// One NSGA-II run seeded with `seed`.
FitResult fit_run(const ReferenceData& reference, const Environment& env, const FitOptions& options, std::uint64_t seed);

struct Selection {
  ModelParams params;
  std::vector<double> objectives;
  std::size_t run = 0;
  bool fallback = false;  // no candidate met f_SoT < pooled mean f_SoT
};

// Pools every run's minimum-f_RE candidate and picks the lowest f_RE among those with
// f_SoT below the pooled mean f_SoT. Throws EmptyRuns.
Selection select_fit(std::span<const FitResult> runs);

struct FitSummary {
  std::vector<FitResult> runs;
  Selection selection;
  std::uint64_t seed = 0;
};

// `options.runs` independent runs with seeds derived from options.nsga.seed.
FitSummary fit(const ReferenceData& reference, const Environment& env, const FitOptions& options);

}  // namespace hml
