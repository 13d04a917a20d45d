#include "tdlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "tdlab/errors.hpp"
#include "tdlab/rng.hpp"
#include "tdlab/td_dynamics.hpp"

namespace tdlab {

namespace {

constexpr double kWilsonZ = 1.959963984540054;

// Runs body(i) for i in [0, count) on up to `jobs` threads. If any call
// throws, the exception from the smallest index is rethrown, so failures are
// as reproducible as results.
template <typename Body>
void parallel_for(long count, int jobs, Body body) {
  const int workers = static_cast<int>(std::max(1L, std::min<long>(std::max(1, jobs), count)));
  std::atomic<long> next{0};
  std::mutex error_mutex;
  long error_index = -1;
  std::exception_ptr error;
  auto work = [&] {
    for (;;) {
      const long i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (error_index < 0 || i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

StateIndex draw_initial_state(const InitialStatePolicy& policy, const PolicyEvalProblem& problem, RngStream& rng) {
  switch (policy.kind) {
    case InitialStatePolicy::Kind::kStationary:
      return sample_from(problem.stationary().pi, rng);
    case InitialStatePolicy::Kind::kUniform: {
      const int s = problem.n_states();
      return std::min(s - 1, static_cast<int>(rng.uniform() * s));
    }
    case InitialStatePolicy::Kind::kFixed:
      return policy.fixed_state;
  }
  return 0;
}

Eigen::VectorXd initial_iterate(const ExperimentConfig& config, int d) {
  return config.initial_x.size() == 0 ? Eigen::VectorXd::Zero(d) : config.initial_x;
}

// Runs steps 0..n0 of trajectory `index`, leaving rng positioned for the
// continuation.
TrajectoryRecord warm_up(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                         const StepSchedule& schedule, const ExperimentConfig& config, RngStream& rng) {
  OnlineRunOptions opts;
  opts.n0 = 0;
  opts.horizon = config.n0;
  opts.initial_x = initial_iterate(config, problem.dim());
  opts.initial_state = draw_initial_state(config.initial_state, problem, rng);
  opts.store_iterates = false;
  return run_online(problem, solution, schedule, opts, rng);
}

[[noreturn]] void rethrow_with_trajectory(const NonFinite& e, long index) {
  std::ostringstream msg;
  msg << "trajectory " << index << ": " << e.what();
  throw NonFinite(msg.str(), e.step());
}

std::vector<double> sorted_unique_with(std::vector<double> values, double required) {
  values.push_back(required);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

std::vector<long> evenly_spaced(long lo, long hi, int count) {
  std::vector<long> out;
  if (hi < lo || count <= 0) return out;
  if (hi - lo + 1 <= count) {
    for (long m = lo; m <= hi; ++m) out.push_back(m);
    return out;
  }
  for (int j = 0; j < count; ++j) {
    const long m = lo + static_cast<long>(std::llround(static_cast<double>(j) * (hi - lo) / (count - 1)));
    if (out.empty() || out.back() != m) out.push_back(m);
  }
  return out;
}

}  // namespace

ProportionEstimate wilson_interval(long successes, long trials) {
  if (trials <= 0 || successes < 0 || successes > trials)
    throw ValidationError("wilson_interval needs 0 <= successes <= trials, trials > 0");
  const double n = static_cast<double>(trials);
  const double p = successes / n;
  const double z2 = kWilsonZ * kWilsonZ;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = kWilsonZ * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  ProportionEstimate out;
  out.estimate = p;
  out.lower = successes == 0 ? 0.0 : std::max(0.0, center - half);
  out.upper = successes == trials ? 1.0 : std::min(1.0, center + half);
  out.successes = successes;
  out.trials = trials;
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

void validate_config(const ExperimentConfig& c, const PolicyEvalProblem& problem) {
  std::ostringstream msg;
  if (c.n_trajectories < 1)
    msg << "n_trajectories must be at least 1";
  else if (c.n0 < 1)
    msg << "n0 must be at least 1";
  else if (c.horizon <= c.n0)
    msg << "horizon " << c.horizon << " must exceed n0 = " << c.n0;
  else if (c.initial_x.size() != 0 && c.initial_x.size() != problem.dim())
    msg << "initial_x has " << c.initial_x.size() << " entries, expected " << problem.dim();
  else if (c.initial_state.kind == InitialStatePolicy::Kind::kFixed &&
           (c.initial_state.fixed_state < 0 || c.initial_state.fixed_state >= problem.n_states()))
    msg << "fixed initial state " << c.initial_state.fixed_state << " is out of range";
  else if (c.D_const && !(*c.D_const > 0.0))
    msg << "D must be positive";
  else if (c.fit_m_points < 1)
    msg << "fit_m_points must be positive";
  if (!msg.str().empty()) throw ValidationError(msg.str());
}

DFit fit_D_from_tail_points(const std::vector<TailPoint>& points, long n0, double d1, double d2, int d) {
  DFit fit;
  double sxy = 0.0;
  double sxx = 0.0;
  double envelope = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> xy;
  for (const TailPoint& p : points) {
    if (!(p.p_hat > 0.0 && p.p_hat < 1.0)) continue;
    const double x = p.delta * p.delta / StepSchedule::beta(n0, p.m, d1, d2);
    const double y = -std::log(p.p_hat / (2.0 * d));
    xy.emplace_back(x, y);
    fit.points.push_back(p);
    sxy += x * y;
    sxx += x * x;
    envelope = std::min(envelope, y / x);
  }
  if (xy.size() < 3 || !(sxx > 0.0)) {
    std::ostringstream msg;
    msg << "only " << xy.size() << " tail points have an exceedance frequency strictly between 0 and 1";
    throw InsufficientTailData(msg.str());
  }
  fit.D = sxy / sxx;
  if (!(fit.D > 0.0)) throw InsufficientTailData("fitted D is not positive");
  fit.D_envelope = envelope;
  fit.n_points = static_cast<long>(xy.size());
  double ss = 0.0;
  for (const auto& [x, y] : xy) {
    const double r = y - fit.D * x;
    fit.residuals.push_back(r);
    ss += r * r;
  }
  fit.rms_residual = std::sqrt(ss / static_cast<double>(xy.size()));
  return fit;
}

DFit fit_D_from_samples(const std::vector<std::vector<double>>& samples, const std::vector<long>& ms,
                        const std::vector<double>& delta_grid, long n0, double d1, double d2, int d) {
  if (samples.size() != ms.size()) throw DimensionMismatch("one sample set per step is required");
  if (delta_grid.size() < 3) throw ValidationError("fitting D needs at least three delta values");
  std::vector<TailPoint> points;
  for (size_t j = 0; j < ms.size(); ++j) {
    const auto& s = samples[j];
    if (s.empty()) continue;
    for (double delta : delta_grid) {
      const long above = std::count_if(s.begin(), s.end(), [delta](double g) { return g > delta; });
      points.push_back({ms[j], delta, static_cast<double>(above) / static_cast<double>(s.size())});
    }
  }
  return fit_D_from_tail_points(points, n0, d1, d2, d);
}

ProportionEstimate estimate_p_init(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                                   const StepSchedule& schedule, const ExperimentConfig& config) {
  validate_config(config, problem);
  std::vector<double> err(static_cast<size_t>(config.n_trajectories));
  parallel_for(config.n_trajectories, config.jobs, [&](long i) {
    RngStream rng(config.master_seed, static_cast<std::uint64_t>(i));
    try {
      err[static_cast<size_t>(i)] = warm_up(problem, solution, schedule, config, rng).error.back();
    } catch (const NonFinite& e) {
      rethrow_with_trajectory(e, i);
    }
  });
  const long exceed = std::count_if(err.begin(), err.end(), [&](double e) { return e > config.epsilon; });
  return wilson_interval(exceed, config.n_trajectories);
}

ExperimentResult run_alltime_experiment(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                                        const StepSchedule& schedule, const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  validate_config(config, problem);
  const ConstantsBundle& k = solution.constants;
  const long n0 = config.n0;
  const long horizon = config.horizon;
  const long span = horizon - n0 + 1;
  const long N = config.n_trajectories;

  const std::vector<double> eps_list = sorted_unique_with(config.epsilon_grid, config.epsilon);
  const std::vector<double> delta_list = sorted_unique_with(config.delta_grid, config.delta);

  // Validate every grid query up front (D and p_init are placeholders here).
  for (double e : eps_list)
    for (double dl : delta_list) {
      BoundQuery q;
      q.epsilon = e;
      q.delta = dl;
      q.n0 = n0;
      q.horizon = horizon;
      validate_query(q, k, schedule);
    }

  // exp(-(1-alpha) b_{n0}(m-1)), shared by all radius curves.
  BoundQuery unit;
  unit.epsilon = 1.0;
  unit.delta = 1.0;
  unit.n0 = n0;
  const double unit_floor = floor_term(unit, k, schedule);
  std::vector<double> decay = radius_curve(unit, k, schedule, horizon);
  for (double& v : decay) v -= unit_floor;

  struct Point {
    double epsilon, delta, floor;
  };
  std::vector<Point> grid;
  size_t primary_index = 0;
  for (double e : eps_list)
    for (double dl : delta_list) {
      BoundQuery q = unit;
      q.epsilon = e;
      q.delta = dl;
      if (e == config.epsilon && dl == config.delta) primary_index = grid.size();
      grid.push_back({e, dl, floor_term(q, k, schedule)});
    }

  const bool need_fit = !config.D_const.has_value();
  const std::vector<long> fit_ms = need_fit ? evenly_spaced(n0 + 1, horizon - 1, config.fit_m_points)
                                            : std::vector<long>{};
  const std::vector<long> q_steps = evenly_spaced(n0, horizon, config.quantile_points);

  struct Outcome {
    double err_n0 = 0.0;
    std::vector<char> violated;
    std::vector<long> primary_steps;
    std::vector<double> q_errors;
    std::vector<double> gamma;
  };
  std::vector<Outcome> outcomes(static_cast<size_t>(N));

  parallel_for(N, config.jobs, [&](long i) {
    RngStream rng(config.master_seed, static_cast<std::uint64_t>(i));
    Outcome& out = outcomes[static_cast<size_t>(i)];
    try {
      const TrajectoryRecord warm = warm_up(problem, solution, schedule, config, rng);
      OnlineRunOptions opts;
      opts.n0 = n0;
      opts.horizon = horizon;
      opts.initial_x = warm.final_x;
      opts.initial_state = warm.final_state;
      opts.store_iterates = false;
      opts.track_martingale_sum = need_fit;
      const TrajectoryRecord rec = run_online(problem, solution, schedule, opts, rng);
      out.err_n0 = rec.error.front();
      out.violated.assign(grid.size(), 0);
      for (size_t g = 0; g < grid.size(); ++g) {
        const Point& p = grid[g];
        for (long j = 0; j < span; ++j) {
          const double r = decay[static_cast<size_t>(j)] * p.epsilon + p.floor;
          if (rec.error[static_cast<size_t>(j)] > r) {
            out.violated[g] = 1;
            if (g != primary_index) break;
            out.primary_steps.push_back(n0 + j);
          }
        }
      }
      out.q_errors.reserve(q_steps.size());
      for (long m : q_steps) out.q_errors.push_back(rec.error[static_cast<size_t>(m - n0)]);
      out.gamma.reserve(fit_ms.size());
      for (long m : fit_ms) out.gamma.push_back(rec.martingale_sum_norm[static_cast<size_t>(m - n0)]);
    } catch (const NonFinite& e) {
      rethrow_with_trajectory(e, i);
    }
  });

  ExperimentResult result;
  result.config = config;

  if (need_fit) {
    std::vector<std::vector<double>> samples(fit_ms.size(), std::vector<double>(static_cast<size_t>(N)));
    std::vector<double> pooled;
    pooled.reserve(fit_ms.size() * static_cast<size_t>(N));
    for (long i = 0; i < N; ++i)
      for (size_t j = 0; j < fit_ms.size(); ++j) {
        samples[j][static_cast<size_t>(i)] = outcomes[static_cast<size_t>(i)].gamma[j];
        pooled.push_back(outcomes[static_cast<size_t>(i)].gamma[j]);
      }
    std::vector<double> deltas = config.fit_delta_grid;
    if (deltas.empty())
      for (double q : {0.5, 0.75, 0.9, 0.95, 0.99}) deltas.push_back(quantile(pooled, q));
    result.fit = fit_D_from_samples(samples, fit_ms, deltas, n0, schedule.d1(), schedule.d2(), k.dim);
    result.D_used = result.fit->D;
  } else {
    result.D_used = *config.D_const;
  }
  result.p_init_source = config.p_init_bound ? "analytic" : "empirical";

  for (size_t g = 0; g < grid.size(); ++g) {
    const Point& p = grid[g];
    GridPointResult gp;
    gp.epsilon = p.epsilon;
    gp.delta = p.delta;
    long exceed_n0 = 0;
    for (const Outcome& o : outcomes) {
      gp.violations += o.violated[g];
      exceed_n0 += o.err_n0 > p.epsilon ? 1 : 0;
    }
    gp.alltime = wilson_interval(N - gp.violations, N);
    gp.p_init = wilson_interval(exceed_n0, N);
    gp.p_init_used = config.p_init_bound ? *config.p_init_bound : gp.p_init.estimate;
    gp.floor_term = p.floor;
    BoundQuery q;
    q.epsilon = p.epsilon;
    q.delta = p.delta;
    q.n0 = n0;
    q.horizon = horizon;
    q.D_const = result.D_used;
    q.p_init = gp.p_init_used;
    gp.tail_sum = tail_probability(q, k, schedule).sum;
    gp.theoretical_lower_bound = 1.0 - gp.tail_sum - gp.p_init_used;
    gp.consistent = gp.alltime.estimate >= gp.theoretical_lower_bound - 2.0 * gp.alltime.half_width();
    result.grid.push_back(gp);
  }
  result.primary = result.grid[primary_index];

  {
    BoundQuery q = unit;
    q.epsilon = config.epsilon;
    q.delta = config.delta;
    result.radius = radius_curve(q, k, schedule, horizon);
  }
  std::vector<long> counts(static_cast<size_t>(span), 0);
  for (const Outcome& o : outcomes)
    for (long m : o.primary_steps) ++counts[static_cast<size_t>(m - n0)];
  for (long j = 0; j < span; ++j)
    if (counts[static_cast<size_t>(j)] > 0) result.per_m_violations.emplace_back(n0 + j, counts[static_cast<size_t>(j)]);

  result.quantile_steps = q_steps;
  std::vector<double> column(static_cast<size_t>(N));
  for (size_t j = 0; j < q_steps.size(); ++j) {
    for (long i = 0; i < N; ++i) column[static_cast<size_t>(i)] = outcomes[static_cast<size_t>(i)].q_errors[j];
    result.error_median.push_back(quantile(column, 0.5));
    result.error_q90.push_back(quantile(column, 0.9));
    result.error_max.push_back(*std::max_element(column.begin(), column.end()));
  }
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

ConvergenceSummary convergence_diagnostics(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                                           const StepSchedule& schedule, const ExperimentConfig& config,
                                           std::vector<long> steps) {
  if (config.n_trajectories < 1) throw ValidationError("n_trajectories must be at least 1");
  if (config.horizon < 1) throw ValidationError("horizon must be at least 1");
  if (steps.empty()) {
    for (long decade = 1; decade <= config.horizon; decade *= 10)
      for (long f : {1L, 2L, 5L})
        if (f * decade <= config.horizon) steps.push_back(f * decade);
    steps.push_back(config.horizon);
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  if (steps.front() < 0 || steps.back() > config.horizon) throw ValidationError("checkpoint outside [0, horizon]");

  const long N = config.n_trajectories;
  std::vector<std::vector<double>> errors(static_cast<size_t>(N));
  parallel_for(N, config.jobs, [&](long i) {
    RngStream rng(config.master_seed, static_cast<std::uint64_t>(i));
    OnlineRunOptions opts;
    opts.n0 = 0;
    opts.horizon = config.horizon;
    opts.initial_x = initial_iterate(config, problem.dim());
    opts.initial_state = draw_initial_state(config.initial_state, problem, rng);
    opts.store_iterates = false;
    try {
      const TrajectoryRecord rec = run_online(problem, solution, schedule, opts, rng);
      auto& e = errors[static_cast<size_t>(i)];
      for (long n : steps) e.push_back(rec.error[static_cast<size_t>(n)]);
    } catch (const NonFinite& e) {
      rethrow_with_trajectory(e, i);
    }
  });

  ConvergenceSummary out;
  out.steps = steps;
  std::vector<double> column(static_cast<size_t>(N));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (size_t j = 0; j < steps.size(); ++j) {
    for (long i = 0; i < N; ++i) column[static_cast<size_t>(i)] = errors[static_cast<size_t>(i)][j];
    out.q25.push_back(quantile(column, 0.25));
    out.median.push_back(quantile(column, 0.5));
    out.q75.push_back(quantile(column, 0.75));
    if (steps[j] >= 10 && out.median.back() > 0.0) {
      const double x = std::log(static_cast<double>(steps[j]));
      const double y = std::log(out.median.back());
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++count;
    }
  }
  if (count >= 2) {
    const double denom = count * sxx - sx * sx;
    if (denom > 0.0) out.log_log_slope = (count * sxy - sx * sy) / denom;
  }
  return out;
}

}  // namespace tdlab
