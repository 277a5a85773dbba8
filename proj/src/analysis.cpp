#include "hml/analysis.hpp"

#include "hml/error.hpp"
#include "hml/parallel.hpp"
#include "hml/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hml {

namespace {

constexpr std::array<std::string_view, kMetricCount> kMetricNames{
    "re", "sot", "fme", "speed", "accuracy", "driving_effort", "exploratory_effort"};

}  // namespace

std::string_view metric_name(Metric m) { return kMetricNames[static_cast<std::size_t>(m)]; }

Metric metric_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kMetricCount; ++i)
    if (kMetricNames[i] == name) return static_cast<Metric>(i);
  throw Error(ErrorKind::UnknownParameter, "unknown metric '" + std::string(name) + "'");
}

double metric_value(const TrialMetrics& t, Metric m) {
  switch (m) {
    case Metric::Re: return t.re;
    case Metric::Sot: return t.sot;
    case Metric::Fme: return t.fme;
    case Metric::Speed: return t.speed;
    case Metric::Accuracy: return t.accuracy;
    case Metric::DrivingEffort: return t.driving_effort;
    case Metric::ExploratoryEffort: return t.exploratory_effort;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void SweepSpec::validate() const {
  const auto& names = ModelParams::names();
  if (std::find(names.begin(), names.end(), parameter) == names.end())
    throw Error(ErrorKind::UnknownParameter, "unknown parameter '" + parameter + "'");
  if (grid.empty()) throw Error(ErrorKind::InvalidConfig, "sweep grid is empty");
  if (replicates < 2) throw Error(ErrorKind::InvalidConfig, "sweep needs at least two replicates");
  if (outputs.empty()) throw Error(ErrorKind::InvalidConfig, "sweep has no output metrics");
  for (double v : grid) {
    ModelParams p = base;
    p.set(parameter, v);
    p.validate();
  }
}

std::vector<double> MetricSeries::trial_means() const {
  std::vector<double> out(per_trial.size());
  for (std::size_t t = 0; t < per_trial.size(); ++t) out[t] = per_trial[t].mean;
  return out;
}

double MetricSeries::overall_mean() const { return mean_ci(values).mean; }

const MetricSeries& SweepCell::at(Metric m) const {
  for (const auto& s : series)
    if (s.metric == m) return s;
  throw Error(ErrorKind::UnknownParameter, "metric '" + std::string(metric_name(m)) + "' was not aggregated");
}

SweepResult sweep(const SweepSpec& spec, const Environment& env, const TaskConfig& config, unsigned threads) {
  spec.validate();
  config.validate();
  const std::size_t reps = static_cast<std::size_t>(spec.replicates);
  const std::size_t trials = static_cast<std::size_t>(config.total_trials());
  const std::size_t outs = spec.outputs.size();

  SweepResult result;
  result.spec = spec;
  result.cells.resize(spec.grid.size());
  for (std::size_t g = 0; g < spec.grid.size(); ++g) {
    result.cells[g].value = spec.grid[g];
    result.cells[g].series.resize(outs);
    for (std::size_t k = 0; k < outs; ++k) {
      auto& s = result.cells[g].series[k];
      s.metric = spec.outputs[k];
      s.trials = trials;
      s.values.assign(reps * trials, 0.0);
    }
  }

  parallel_for(spec.grid.size() * reps, threads, [&](std::size_t idx) {
    const std::size_t g = idx / reps, r = idx % reps;
    ModelParams p = spec.base;
    p.set(spec.parameter, spec.grid[g]);
    TaskConfig c = config;
    c.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(r)});
    c.keep_trajectories = false;
    const ExperimentRecord rec = run_experiment(env, p, c);
    for (std::size_t k = 0; k < outs; ++k) {
      auto& values = result.cells[g].series[k].values;
      for (std::size_t t = 0; t < trials; ++t) values[r * trials + t] = metric_value(rec.metrics[t].metrics, spec.outputs[k]);
    }
  });

  std::vector<double> column(reps);
  for (auto& cell : result.cells)
    for (auto& s : cell.series) {
      s.per_trial.resize(trials);
      for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t r = 0; r < reps; ++r) column[r] = s.values[r * trials + t];
        s.per_trial[t] = mean_ci(column);
      }
    }
  return result;
}

void SatisficingSpec::validate() const {
  if (fme_thresholds.empty() || rho_x.empty() || trial_times.empty())
    throw Error(ErrorKind::InvalidConfig, "satisficing grids must be nonempty");
  for (double v : fme_thresholds)
    if (!(v > 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidConfig, "FME thresholds must lie in (0, 1]");
  for (double v : rho_x)
    if (!(v > 0.0)) throw Error(ErrorKind::InvalidConfig, "rho_x values must be positive");
  for (double v : trial_times)
    if (!(v > 0.0)) throw Error(ErrorKind::InvalidConfig, "trial times must be positive");
  if (replicates < 1) throw Error(ErrorKind::InvalidConfig, "satisficing needs at least one replicate");
}

const SatisficingCell& SatisficingResult::at(std::size_t threshold, std::size_t time, std::size_t rho) const {
  return cells[(threshold * spec.trial_times.size() + time) * spec.rho_x.size() + rho];
}

SatisficingResult satisficing_study(const SatisficingSpec& spec, const Environment& env, const ModelParams& params,
                                    const TaskConfig& config, unsigned threads) {
  spec.validate();
  params.validate();
  const std::size_t reps = static_cast<std::size_t>(spec.replicates);
  const std::size_t nth = spec.fme_thresholds.size(), ntime = spec.trial_times.size();

  std::vector<TrialRecord> finals(nth * ntime * reps);
  std::vector<char> froze(finals.size(), 0);
  parallel_for(finals.size(), threads, [&](std::size_t idx) {
    const std::size_t r = idx % reps, rest = idx / reps;
    const std::size_t time = rest % ntime, th = rest / ntime;
    TaskConfig c = config;
    c.mode = TrialMode::FixedDuration;
    c.trial_time = spec.trial_times[time];
    c.trial_durations.clear();
    c.freeze_fme_threshold = spec.fme_thresholds[th];
    c.keep_trajectories = false;
    c.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(r)});
    ExperimentRecord rec = run_experiment(env, params, c);
    froze[idx] = rec.frozen_at_trial.has_value();
    finals[idx] = std::move(rec.sessions.back().back());
  });

  SatisficingResult out;
  out.spec = spec;
  for (std::size_t th = 0; th < nth; ++th)
    for (std::size_t time = 0; time < ntime; ++time) {
      const std::span<const TrialRecord> block(finals.data() + (th * ntime + time) * reps, reps);
      std::size_t frozen = 0;
      for (std::size_t r = 0; r < reps; ++r) frozen += froze[(th * ntime + time) * reps + r] ? 1 : 0;
      for (double rho : spec.rho_x) {
        SatisficingCell cell;
        cell.fme_threshold = spec.fme_thresholds[th];
        cell.rho_x = rho;
        cell.trial_time = spec.trial_times[time];
        cell.success = success_probability(block, rho, spec.trial_times[time]);
        cell.frozen_share = static_cast<double>(frozen) / static_cast<double>(reps);
        out.cells.push_back(cell);
      }
    }
  return out;
}

void FlexibilitySpec::validate(std::size_t joints) const {
  if (synergy_counts.empty() || sigma_u.empty()) throw Error(ErrorKind::InvalidConfig, "flexibility grids must be nonempty");
  for (std::size_t h : synergy_counts)
    if (h < 1 || h > joints)
      throw Error(ErrorKind::HOutOfRange, "synergy count " + std::to_string(h) + " outside [1, " + std::to_string(joints) + "]");
  for (double s : sigma_u)
    if (!(s >= 0.0) || !std::isfinite(s)) throw Error(ErrorKind::InvalidConfig, "sigma_u values must be >= 0");
  if (replicates < 1 || sessions < 1) throw Error(ErrorKind::InvalidConfig, "replicates and sessions must be >= 1");
}

const FlexibilityCell& FlexibilityResult::at(std::size_t h_index, std::size_t sigma_index) const {
  return cells[h_index * spec.sigma_u.size() + sigma_index];
}

std::size_t FlexibilityResult::argmin_h(std::size_t sigma_index) const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < spec.synergy_counts.size(); ++i)
    if (at(i, sigma_index).fme.mean < at(best, sigma_index).fme.mean) best = i;
  return best;
}

Matrix random_mapping(std::size_t n, std::size_t m, double spectral_scale, std::uint64_t seed) {
  Rng rng(seed);
  Matrix c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  rng.fill_normal(c);
  return c * (spectral_scale / spectral_norm(c));
}

FlexibilityResult flexibility_study(const FlexibilitySpec& spec, const PcaResult& pca, const Matrix& c,
                                    const ModelParams& params, const TaskConfig& config, unsigned threads) {
  spec.validate(pca.count());
  params.validate();
  if (static_cast<std::size_t>(c.cols()) != pca.joints())
    throw Error(ErrorKind::DimensionMismatch, "mapping columns differ from the number of joints");

  std::vector<Environment> envs;
  FlexibilityResult out;
  out.spec = spec;
  out.mapping = c;
  for (std::size_t h : spec.synergy_counts) envs.push_back(Environment::make(MappingMatrix{c}, extract_synergies(pca, h)));

  const std::size_t reps = static_cast<std::size_t>(spec.replicates), ns = spec.sigma_u.size();
  std::vector<double> fmes(envs.size() * ns * reps);
  parallel_for(fmes.size(), threads, [&](std::size_t idx) {
    const std::size_t r = idx % reps, cell = idx / reps;
    ModelParams p = params;
    p.sigma_u = spec.sigma_u[cell % ns];
    TaskConfig cfg = config;
    cfg.sessions = spec.sessions;
    cfg.keep_trajectories = false;
    cfg.freeze_fme_threshold.reset();
    cfg.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(r)});
    const ExperimentRecord rec = run_experiment(envs[cell / ns], p, cfg);
    fmes[idx] = rec.sessions.back().back().fme_at_end;
  });

  for (std::size_t hi = 0; hi < envs.size(); ++hi) {
    const Matrix& phi = envs[hi].phi;
    const double residual = spectral_norm(c - c * phi.transpose() * phi) / spectral_norm(c);
    for (std::size_t si = 0; si < ns; ++si) {
      FlexibilityCell cell;
      cell.h = spec.synergy_counts[hi];
      cell.sigma_u = spec.sigma_u[si];
      cell.fme = mean_ci(std::span<const double>(fmes.data() + (hi * ns + si) * reps, reps));
      cell.residual = residual;
      out.cells.push_back(cell);
    }
  }
  return out;
}

}  // namespace hml
