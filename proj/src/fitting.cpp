#include "hml/fitting.hpp"

#include "hml/error.hpp"
#include "hml/metrics.hpp"
#include "hml/parallel.hpp"
#include "hml/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream tags for derive_seed.
enum : std::uint64_t { kEvaluationStream = 1, kOperatorStream = 2, kRunStream = 3 };

}  // namespace

void ParamBounds::validate() const {
  if (low.size() != high.size() || low.empty())
    throw Error(ErrorKind::InvalidConfig, "bounds need matching, nonempty low/high vectors");
  for (std::size_t i = 0; i < low.size(); ++i)
    if (!std::isfinite(low[i]) || !std::isfinite(high[i]) || !(low[i] < high[i]))
      throw Error(ErrorKind::InvalidConfig, "bound " + std::to_string(i) + " needs finite low < high");
}

bool ParamBounds::contains(std::span<const double> genome) const {
  if (genome.size() != low.size()) return false;
  for (std::size_t i = 0; i < genome.size(); ++i)
    if (!(genome[i] >= low[i] && genome[i] <= high[i])) return false;
  return true;
}

bool dominates(std::span<const double> a, std::span<const double> b) {
  bool strictly = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] > b[k]) return false;
    if (a[k] < b[k]) strictly = true;
  }
  return strictly;
}

std::vector<std::vector<std::size_t>> nondominated_sort(const std::vector<std::vector<double>>& objectives) {
  const std::size_t n = objectives.size();
  std::vector<std::vector<std::size_t>> dominated(n);
  std::vector<std::size_t> count(n, 0);
  std::vector<std::vector<std::size_t>> fronts;
  std::vector<std::size_t> current;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t q = 0; q < n; ++q) {
      if (p == q) continue;
      if (dominates(objectives[p], objectives[q]))
        dominated[p].push_back(q);
      else if (dominates(objectives[q], objectives[p]))
        ++count[p];
    }
    if (count[p] == 0) current.push_back(p);
  }
  while (!current.empty()) {
    std::vector<std::size_t> next;
    for (std::size_t p : current)
      for (std::size_t q : dominated[p])
        if (--count[q] == 0) next.push_back(q);
    std::sort(next.begin(), next.end());
    fronts.push_back(std::move(current));
    current = std::move(next);
  }
  return fronts;
}

std::vector<double> crowding_distance(const std::vector<std::vector<double>>& objectives,
                                      std::span<const std::size_t> front) {
  const std::size_t size = front.size();
  std::vector<double> distance(size, 0.0);
  if (size == 0) return distance;
  if (size <= 2) {
    std::fill(distance.begin(), distance.end(), kInf);
    return distance;
  }
  const std::size_t dims = objectives[front[0]].size();
  std::vector<std::size_t> order(size);
  for (std::size_t k = 0; k < dims; ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return objectives[front[a]][k] < objectives[front[b]][k];
    });
    const double lo = objectives[front[order.front()]][k];
    const double hi = objectives[front[order.back()]][k];
    distance[order.front()] = kInf;
    distance[order.back()] = kInf;
    const double range = hi - lo;
    if (!(range > 0.0) || !std::isfinite(range)) continue;
    for (std::size_t i = 1; i + 1 < size; ++i) {
      const double gap = objectives[front[order[i + 1]]][k] - objectives[front[order[i - 1]]][k];
      distance[order[i]] += gap / range;
    }
  }
  return distance;
}

std::pair<std::vector<double>, std::vector<double>> sbx_crossover(const std::vector<double>& p1,
                                                                  const std::vector<double>& p2,
                                                                  const ParamBounds& bounds, Rng& rng, double rate,
                                                                  double eta_c) {
  std::vector<double> c1 = p1, c2 = p2;
  if (rng.uniform() >= rate) return {c1, c2};
  for (std::size_t i = 0; i < p1.size(); ++i) {
    if (rng.uniform() > 0.5) continue;
    if (std::abs(p1[i] - p2[i]) <= 1e-14) continue;
    const double lb = bounds.low[i], ub = bounds.high[i];
    const double y1 = std::min(p1[i], p2[i]), y2 = std::max(p1[i], p2[i]);
    const double u = rng.uniform();
    auto spread = [&](double beta) {
      const double alpha = 2.0 - std::pow(beta, -(eta_c + 1.0));
      return u <= 1.0 / alpha ? std::pow(u * alpha, 1.0 / (eta_c + 1.0))
                              : std::pow(1.0 / (2.0 - u * alpha), 1.0 / (eta_c + 1.0));
    };
    const double b1 = spread(1.0 + 2.0 * (y1 - lb) / (y2 - y1));
    const double b2 = spread(1.0 + 2.0 * (ub - y2) / (y2 - y1));
    double v1 = std::clamp(0.5 * ((y1 + y2) - b1 * (y2 - y1)), lb, ub);
    double v2 = std::clamp(0.5 * ((y1 + y2) + b2 * (y2 - y1)), lb, ub);
    if (rng.uniform() <= 0.5) std::swap(v1, v2);
    c1[i] = v1;
    c2[i] = v2;
  }
  return {c1, c2};
}

std::vector<double> polynomial_mutation(const std::vector<double>& genome, const ParamBounds& bounds, Rng& rng,
                                        double rate, double eta_m) {
  std::vector<double> out = genome;
  const double power = 1.0 / (eta_m + 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (rng.uniform() >= rate) continue;
    const double lb = bounds.low[i], ub = bounds.high[i], range = ub - lb;
    const double y = out[i];
    const double d1 = (y - lb) / range, d2 = (ub - y) / range;
    const double r = rng.uniform();
    double dq;
    if (r < 0.5) {
      const double val = 2.0 * r + (1.0 - 2.0 * r) * std::pow(1.0 - d1, eta_m + 1.0);
      dq = std::pow(val, power) - 1.0;
    } else {
      const double val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * std::pow(1.0 - d2, eta_m + 1.0);
      dq = 1.0 - std::pow(val, power);
    }
    out[i] = std::clamp(y + dq * range, lb, ub);
  }
  return out;
}

double hypervolume_2d(const std::vector<std::vector<double>>& points, const std::array<double, 2>& reference) {
  std::vector<std::array<double, 2>> inside;
  for (const auto& p : points)
    if (p[0] < reference[0] && p[1] < reference[1]) inside.push_back({p[0], p[1]});
  std::sort(inside.begin(), inside.end());
  double volume = 0.0, best_y = reference[1];
  for (const auto& p : inside) {
    if (p[1] >= best_y) continue;  // dominated by an earlier point
    volume += (reference[0] - p[0]) * (best_y - p[1]);
    best_y = p[1];
  }
  return volume;
}

namespace {

bool crowded_less(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.crowding > b.crowding;
}

std::vector<std::vector<double>> objectives_of(const std::vector<Individual>& pop) {
  std::vector<std::vector<double>> out;
  out.reserve(pop.size());
  for (const auto& ind : pop) out.push_back(ind.objectives);
  return out;
}

// Assigns rank and crowding to every member; returns the fronts.
std::vector<std::vector<std::size_t>> rank_population(std::vector<Individual>& pop) {
  const auto objs = objectives_of(pop);
  auto fronts = nondominated_sort(objs);
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    const auto dist = crowding_distance(objs, fronts[f]);
    for (std::size_t i = 0; i < fronts[f].size(); ++i) {
      pop[fronts[f][i]].rank = static_cast<int>(f);
      pop[fronts[f][i]].crowding = dist[i];
    }
  }
  return fronts;
}

void evaluate_all(std::vector<Individual>& batch, const Evaluator& evaluate, std::uint64_t master, int generation,
                  unsigned threads) {
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const std::uint64_t seed =
        derive_seed(master, {kEvaluationStream, static_cast<std::uint64_t>(generation), static_cast<std::uint64_t>(i)});
    std::vector<double> f;
    try {
      f = evaluate(batch[i].genome, seed);
    } catch (const Error&) {
      f.clear();
    }
    if (f.empty()) f.assign(2, kInf);
    for (double& v : f)
      if (!std::isfinite(v)) v = kInf;
    batch[i].objectives = std::move(f);
  });
  // An evaluator that failed on every member leaves no length hint; keep shapes aligned.
  std::size_t dims = 0;
  for (const auto& ind : batch) dims = std::max(dims, ind.objectives.size());
  for (auto& ind : batch)
    if (ind.objectives.size() < dims) ind.objectives.assign(dims, kInf);
}

std::size_t tournament(const std::vector<Individual>& pop, Rng& rng) {
  const std::size_t a = rng.index(pop.size());
  const std::size_t b = rng.index(pop.size());
  if (crowded_less(pop[b], pop[a])) return b;
  return a;
}

}  // namespace

Nsga2Result nsga2(const ParamBounds& bounds, const Evaluator& evaluate, const Nsga2Options& options,
                  const GenerationObserver& observer) {
  bounds.validate();
  if (options.population < 2) throw Error(ErrorKind::InvalidConfig, "population must be >= 2");
  if (options.generations < 0) throw Error(ErrorKind::InvalidConfig, "generations must be >= 0");
  const std::size_t n = options.population;
  const std::size_t dims = bounds.size();
  Rng rng(derive_seed(options.seed, {kOperatorStream}));
  Nsga2Result result;

  std::vector<Individual> pop(n);
  for (auto& ind : pop) {
    ind.genome.resize(dims);
    for (std::size_t i = 0; i < dims; ++i)
      ind.genome[i] = bounds.low[i] + rng.uniform() * (bounds.high[i] - bounds.low[i]);
  }
  evaluate_all(pop, evaluate, options.seed, 0, options.threads);
  result.evaluations += n;
  rank_population(pop);
  if (observer) observer(0, pop);

  const VariationOptions& v = options.variation;
  for (int gen = 1; gen <= options.generations; ++gen) {
    std::vector<Individual> offspring;
    offspring.reserve(n + 1);
    while (offspring.size() < n) {
      const auto& p1 = pop[tournament(pop, rng)];
      const auto& p2 = pop[tournament(pop, rng)];
      auto [c1, c2] = sbx_crossover(p1.genome, p2.genome, bounds, rng, v.crossover_rate, v.eta_c);
      offspring.push_back(Individual{polynomial_mutation(c1, bounds, rng, v.mutation_rate, v.eta_m), {}, 0, 0.0});
      offspring.push_back(Individual{polynomial_mutation(c2, bounds, rng, v.mutation_rate, v.eta_m), {}, 0, 0.0});
    }
    offspring.resize(n);
    evaluate_all(offspring, evaluate, options.seed, gen, options.threads);
    result.evaluations += n;

    std::vector<Individual> merged = std::move(pop);
    merged.insert(merged.end(), std::make_move_iterator(offspring.begin()), std::make_move_iterator(offspring.end()));
    const auto fronts = rank_population(merged);
    std::vector<Individual> next;
    next.reserve(n);
    for (const auto& front : fronts) {
      if (next.size() + front.size() <= n) {
        for (std::size_t i : front) next.push_back(merged[i]);
        continue;
      }
      std::vector<std::size_t> order(front.begin(), front.end());
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return merged[a].crowding > merged[b].crowding; });
      for (std::size_t k = 0; next.size() < n; ++k) next.push_back(merged[order[k]]);
      break;
    }
    pop = std::move(next);
    rank_population(pop);
    if (observer) observer(gen, pop);
  }

  for (const auto& ind : pop)
    if (ind.rank == 0) result.front.push_back(ind);
  result.population = std::move(pop);
  return result;
}

ReferenceData reference_from_metrics(std::span<const MetricRow> rows) {
  if (rows.empty()) throw Error(ErrorKind::InvalidConfig, "reference data has no trials");
  ReferenceData ref;
  ref.sessions = rows.back().session + 1;
  if (rows.size() % static_cast<std::size_t>(ref.sessions) != 0)
    throw Error(ErrorKind::InvalidConfig, "reference rows do not form equal sessions");
  ref.trials_per_session = static_cast<int>(rows.size() / static_cast<std::size_t>(ref.sessions));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int s = static_cast<int>(i) / ref.trials_per_session, t = static_cast<int>(i) % ref.trials_per_session;
    if (rows[i].session != s || rows[i].trial != t)
      throw Error(ErrorKind::InvalidConfig, "reference row " + std::to_string(i) + " is out of order");
    const TrialMetrics& m = rows[i].metrics;
    if (!std::isfinite(m.re) || !std::isfinite(m.speed) || !(m.speed > 0.0))
      throw Error(ErrorKind::NonFiniteData, "reference row " + std::to_string(i) + " has invalid RE or speed");
    ref.re.push_back(m.re);
    ref.sot.push_back(std::isnan(m.sot) ? 0.0 : m.sot);
    ref.durations.push_back(m.speed);
  }
  return ref;
}

std::vector<double> genome_from_params(const ModelParams& p) {
  std::vector<double> g;
  for (auto name : kFitParameters) g.push_back(p.get(name));
  return g;
}

ModelParams params_from_genome(std::span<const double> genome, const ModelParams& base) {
  if (genome.size() != kFitParameters.size())
    throw Error(ErrorKind::DimensionMismatch, "genome needs " + std::to_string(kFitParameters.size()) + " genes");
  ModelParams p = base;
  for (std::size_t i = 0; i < genome.size(); ++i) p.set(kFitParameters[i], genome[i]);
  return p;
}

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

}  // namespace

std::array<double, 2> fit_objectives(const ModelParams& params, const ReferenceData& reference, const Environment& env,
                                     const TaskConfig& base, std::uint64_t seed) {
  if (reference.re.empty() || reference.re.size() != reference.sot.size() ||
      reference.re.size() != reference.durations.size())
    throw Error(ErrorKind::InvalidConfig, "reference sequences must be nonempty and aligned");
  TaskConfig config = base;
  config.sessions = reference.sessions;
  config.trials_per_session = reference.trials_per_session;
  config.trial_durations = reference.durations;
  config.keep_trajectories = false;
  config.freeze_fme_threshold.reset();
  config.seed = seed;

  ExperimentRecord rec;
  try {
    rec = run_experiment(env, params, config);
  } catch (const NonFiniteStateError&) {
    return {kInf, kInf};
  }
  std::vector<double> re, sot;
  re.reserve(rec.metrics.size());
  sot.reserve(rec.metrics.size());
  for (const auto& row : rec.metrics) {
    re.push_back(row.metrics.re);
    sot.push_back(std::isnan(row.metrics.sot) ? 0.0 : row.metrics.sot);
  }
  const double f_re = distance(moving_average(re), moving_average(reference.re));
  const double f_sot = distance(moving_average(sot), moving_average(reference.sot));
  return {std::isfinite(f_re) ? f_re : kInf, std::isfinite(f_sot) ? f_sot : kInf};
}

FitResult fit_run(const ReferenceData& reference, const Environment& env, const FitOptions& options,
                  std::uint64_t seed) {
  Nsga2Options nsga = options.nsga;
  nsga.seed = seed;
  Evaluator evaluate = [&](const std::vector<double>& genome, std::uint64_t eval_seed) {
    const auto f = fit_objectives(params_from_genome(genome, options.base), reference, env, options.task, eval_seed);
    return std::vector<double>{f[0], f[1]};
  };
  Nsga2Result res = nsga2(options.bounds, evaluate, nsga);

  FitResult out;
  out.pareto_front = std::move(res.front);
  std::stable_sort(out.pareto_front.begin(), out.pareto_front.end(),
                   [](const Individual& a, const Individual& b) { return a.objectives < b.objectives; });
  const Individual& best = out.pareto_front.front();
  out.chosen = params_from_genome(best.genome, options.base);
  out.chosen_objectives = best.objectives;
  out.provenance = FitProvenance{seed, nsga.generations, nsga.population, res.evaluations};
  return out;
}

Selection select_fit(std::span<const FitResult> runs) {
  if (runs.empty()) throw Error(ErrorKind::EmptyRuns, "no fit runs to select from");
  double mean_sot = 0.0;
  for (const auto& r : runs) {
    if (r.chosen_objectives.size() < 2) throw Error(ErrorKind::InvalidConfig, "fit run lacks objectives");
    mean_sot += r.chosen_objectives[1];
  }
  mean_sot /= static_cast<double>(runs.size());

  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].chosen_objectives[1] < mean_sot && (!pick || runs[i].chosen_objectives[0] < runs[*pick].chosen_objectives[0]))
      pick = i;
  Selection sel;
  if (!pick) {
    sel.fallback = true;
    pick = 0;
    for (std::size_t i = 1; i < runs.size(); ++i)
      if (runs[i].chosen_objectives[0] < runs[*pick].chosen_objectives[0]) pick = i;
  }
  sel.run = *pick;
  sel.params = runs[*pick].chosen;
  sel.objectives = runs[*pick].chosen_objectives;
  return sel;
}

FitSummary fit(const ReferenceData& reference, const Environment& env, const FitOptions& options) {
  if (options.runs < 1) throw Error(ErrorKind::EmptyRuns, "at least one fit run is required");
  FitSummary out;
  out.seed = options.nsga.seed;
  for (int r = 0; r < options.runs; ++r)
    out.runs.push_back(
        fit_run(reference, env, options, derive_seed(options.nsga.seed, {kRunStream, static_cast<std::uint64_t>(r)})));
  out.selection = select_fit(out.runs);
  return out;
}

}  // namespace hml
