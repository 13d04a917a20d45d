#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "tdlab/errors.hpp"
#include "tdlab/experiment.hpp"
#include "tdlab/td_dynamics.hpp"

using namespace tdlab;

TEST(Wilson, TabulatedIntervals) {
  const auto half = wilson_interval(5, 10);
  EXPECT_NEAR(half.lower, 0.23659, 1e-5);
  EXPECT_NEAR(half.upper, 0.76341, 1e-5);
  EXPECT_EQ(half.estimate, 0.5);
  const auto none = wilson_interval(0, 10);
  EXPECT_EQ(none.lower, 0.0);
  // z^2 / (n + z^2).
  const double z2 = 1.959963984540054 * 1.959963984540054;
  EXPECT_NEAR(none.upper, z2 / (10.0 + z2), 1e-12);
  const auto all = wilson_interval(10, 10);
  EXPECT_NEAR(all.lower, 10.0 / (10.0 + z2), 1e-12);
  EXPECT_EQ(all.upper, 1.0);
  EXPECT_THROW(wilson_interval(3, 2), ValidationError);
  EXPECT_THROW(wilson_interval(0, 0), ValidationError);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_EQ(quantile({3, 1, 2}, 0.25), 1.5);
  EXPECT_EQ(quantile({7}, 0.9), 7.0);
  EXPECT_THROW(quantile({}, 0.5), ValidationError);
}

TEST(FitD, RecoversExactModel) {
  std::vector<TailPoint> points;
  const long n0 = 50;
  for (long m : {60L, 100L, 400L})
    for (double delta : {0.15, 0.2, 0.3}) {
      const double beta = StepSchedule::beta(n0, m, 0.5, 1.0);
      points.push_back({m, delta, 2.0 * 2 * std::exp(-2.0 * delta * delta / beta)});
    }
  points.push_back({70, 0.01, 1.0});  // saturated, skipped
  points.push_back({70, 0.9, 0.0});   // empty, skipped
  const auto fit = fit_D_from_tail_points(points, n0, 0.5, 1.0, 2);
  EXPECT_NEAR(fit.D, 2.0, 1e-12);
  EXPECT_NEAR(fit.D_envelope, 2.0, 1e-12);
  EXPECT_EQ(fit.n_points, 9);
  EXPECT_LT(fit.rms_residual, 1e-12);
}

TEST(FitD, TooFewPointsThrows) {
  const std::vector<TailPoint> points{{10, 0.1, 0.5}, {20, 0.1, 0.3}, {30, 0.1, 1.0}};
  EXPECT_THROW(fit_D_from_tail_points(points, 5, 0.5, 1.0, 1), InsufficientTailData);
}

TEST(FitD, SyntheticSamplesNearTruth) {
  // Gamma = sqrt(beta log(2d/U) / D) has P(Gamma > delta) = 2d exp(-D delta^2/beta) where below 1.
  const double D = 2.0;
  const int d = 1;
  const long n0 = 20;
  const std::vector<long> ms{30, 60, 120, 240};
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> samples;
  for (long m : ms) {
    const double beta = StepSchedule::beta(n0, m, 0.5, 1.0);
    std::vector<double> s(20'000);
    for (double& g : s) g = std::sqrt(beta * std::log(2.0 * d / (1.0 - unif(gen))) / D);
    samples.push_back(std::move(s));
  }
  const auto fit = fit_D_from_samples(samples, ms, {0.15, 0.2, 0.25, 0.3}, n0, 0.5, 1.0, d);
  EXPECT_NEAR(fit.D, D, 0.1 * D);
}

namespace {
ExperimentConfig three_state_config() {
  ExperimentConfig c;
  c.n0 = 400;
  c.horizon = 1500;
  c.n_trajectories = 40;
  c.master_seed = 11;
  c.epsilon = 0.3;
  c.delta = 1.0;
  c.epsilon_grid = {0.1, 0.3};
  c.delta_grid = {0.9, 0.95};
  c.D_const = 1.0;
  c.initial_state.kind = InitialStatePolicy::Kind::kFixed;
  c.initial_state.fixed_state = 1;
  c.quantile_points = 10;
  return c;
}

// The true constants give a floor in the hundreds on this instance, so no
// trajectory ever leaves the radius. Shrinking the constants puts the floor
// at 2 delta, inside the spread of the errors, so the violation bookkeeping
// is observable.
AnalyticSolution tight_solution(const PolicyEvalProblem& p) {
  AnalyticSolution sol = solve_analytic(p);
  sol.constants.alpha = 0.5;
  sol.constants.c1 = 0.0;
  sol.constants.c2 = 0.0;
  return sol;
}
}  // namespace

TEST(Experiment, ViolationCountsMatchBruteForce) {
  const auto cfg = load_config(tdtest::source_path("configs/three_state.json"));
  const auto p = build_problem(cfg);
  const auto sol = tight_solution(p);
  const auto s = build_schedule(cfg.schedule);
  const auto c = three_state_config();
  const auto result = run_alltime_experiment(p, sol, s, c);
  ASSERT_EQ(result.grid.size(), 6u);
  long total = 0;

  // Oracle: one uninterrupted run from step 0 per trajectory on the same stream.
  std::vector<std::vector<double>> errors;
  for (long i = 0; i < c.n_trajectories; ++i) {
    RngStream rng(c.master_seed, static_cast<std::uint64_t>(i));
    OnlineRunOptions opt;
    opt.n0 = 0;
    opt.horizon = c.horizon;
    opt.initial_x = Eigen::VectorXd::Zero(p.dim());
    opt.initial_state = 1;
    opt.store_iterates = false;
    errors.push_back(run_online(p, sol, s, opt, rng).error);
  }
  for (const auto& g : result.grid) {
    BoundQuery q;
    q.epsilon = g.epsilon;
    q.delta = g.delta;
    q.n0 = c.n0;
    const auto radius = radius_curve(q, sol.constants, s, c.horizon);
    long violations = 0, exceed = 0;
    for (const auto& e : errors) {
      bool bad = false;
      for (long m = c.n0; m <= c.horizon; ++m)
        bad = bad || e[static_cast<size_t>(m)] > radius[static_cast<size_t>(m - c.n0)];
      violations += bad ? 1 : 0;
      exceed += e[static_cast<size_t>(c.n0)] > g.epsilon ? 1 : 0;
    }
    EXPECT_EQ(g.violations, violations) << g.epsilon << " " << g.delta;
    total += violations;
    EXPECT_EQ(g.p_init.successes, exceed);
    EXPECT_EQ(g.alltime.successes, c.n_trajectories - violations);
    EXPECT_NEAR(g.theoretical_lower_bound, 1.0 - g.tail_sum - g.p_init_used, 1e-15);
  }
  EXPECT_GT(total, 0);
  EXPECT_LT(total, 6 * c.n_trajectories);
  EXPECT_EQ(result.primary.epsilon, 0.3);
  EXPECT_EQ(result.primary.delta, 1.0);
  EXPECT_EQ(result.p_init_source, "empirical");
  EXPECT_EQ(result.D_used, 1.0);
  EXPECT_FALSE(result.fit.has_value());
}

TEST(Experiment, MonotoneInDeltaAndEpsilon) {
  const auto cfg = load_config(tdtest::source_path("configs/three_state.json"));
  const auto p = build_problem(cfg);
  const auto sol = tight_solution(p);
  auto c = three_state_config();
  c.delta_grid = {0.8, 0.85, 0.9, 0.95};
  const auto result = run_alltime_experiment(p, sol, build_schedule(cfg.schedule), c);
  // Epsilon-major, delta increasing within each epsilon block.
  for (size_t g = 1; g < result.grid.size(); ++g) {
    if (result.grid[g].epsilon != result.grid[g - 1].epsilon) continue;
    EXPECT_LE(result.grid[g].violations, result.grid[g - 1].violations);
  }
  EXPECT_GT(result.grid.front().violations, result.grid[4].violations);
}

TEST(Experiment, JobsDoNotChangeResults) {
  const auto cfg = load_config(tdtest::source_path("configs/three_state.json"));
  const auto p = build_problem(cfg);
  const auto sol = solve_analytic(p);
  const auto s = build_schedule(cfg.schedule);
  auto c = three_state_config();
  c.D_const.reset();
  const auto one = run_alltime_experiment(p, sol, s, c);
  c.jobs = 4;
  const auto four = run_alltime_experiment(p, sol, s, c);
  ASSERT_TRUE(one.fit && four.fit);
  EXPECT_EQ(one.fit->D, four.fit->D);
  EXPECT_EQ(one.error_median, four.error_median);
  EXPECT_EQ(one.per_m_violations, four.per_m_violations);
  for (size_t g = 0; g < one.grid.size(); ++g) EXPECT_EQ(one.grid[g].violations, four.grid[g].violations);
}

TEST(Experiment, ScalarInstanceIsDeterministic) {
  const auto p = tdtest::scalar_problem();
  const auto sol = solve_analytic(p);
  const auto s = StepSchedule::harmonic(0.5, {});
  ExperimentConfig c;
  c.n0 = 10;
  c.horizon = 200;
  c.n_trajectories = 5;
  c.epsilon = 1.0;
  c.delta = 0.5;
  c.D_const = 1.0;
  c.p_init_bound = 0.0;
  const auto result = run_alltime_experiment(p, sol, s, c);
  double x = 0.0;
  for (long n = 0; n < 10; ++n) x += 0.5 / static_cast<double>(n + 1) * (0.5 - 0.125 * x);
  // |x_10 - 4| is about 3.4 > epsilon, so every trajectory starts outside.
  ASSERT_GT(std::abs(x - 4.0), 1.0);
  EXPECT_EQ(result.primary.p_init.successes, 5);
  EXPECT_EQ(result.p_init_source, "analytic");
  EXPECT_EQ(result.primary.p_init_used, 0.0);
  for (size_t j = 0; j < result.error_median.size(); ++j) EXPECT_EQ(result.error_median[j], result.error_max[j]);
  // All constants vanish: radius = exp(-(1-alpha) b) + delta / (1 - alpha).
  const double alpha = sol.constants.alpha;
  EXPECT_NEAR(result.radius.front(), 1.0 + 0.5 / (1.0 - alpha), 1e-12);
}

TEST(Experiment, EstimatePInitMatchesGrid) {
  const auto cfg = load_config(tdtest::source_path("configs/three_state.json"));
  const auto p = build_problem(cfg);
  const auto sol = solve_analytic(p);
  const auto s = build_schedule(cfg.schedule);
  const auto c = three_state_config();
  const auto est = estimate_p_init(p, sol, s, c);
  const auto result = run_alltime_experiment(p, sol, s, c);
  EXPECT_EQ(est.successes, result.primary.p_init.successes);
}

TEST(Experiment, RejectsBadConfig) {
  const auto p = tdtest::scalar_problem();
  const auto sol = solve_analytic(p);
  const auto s = StepSchedule::harmonic(0.5, {});
  ExperimentConfig c;
  c.n0 = 10;
  c.horizon = 10;
  EXPECT_THROW(run_alltime_experiment(p, sol, s, c), ValidationError);
  c.horizon = 20;
  c.initial_x = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(run_alltime_experiment(p, sol, s, c), ValidationError);
  c.initial_x.resize(0);
  c.delta = 0.0;
  EXPECT_THROW(run_alltime_experiment(p, sol, s, c), InfeasibleQuery);
}

TEST(Convergence, ScalarSlopeMatchesProductAsymptotics) {
  const auto p = tdtest::scalar_problem();
  const auto sol = solve_analytic(p);
  const auto s = StepSchedule::harmonic(0.5, {});
  ExperimentConfig c;
  c.horizon = 100'000;
  c.n_trajectories = 2;
  const auto summary = convergence_diagnostics(p, sol, s, c);
  EXPECT_EQ(summary.steps.front(), 1);
  EXPECT_EQ(summary.steps.back(), 100'000);
  // |x_n - 4| = 4 prod_{k<n} (1 - 0.0625/(k+1)) ~ C n^{-0.0625}.
  EXPECT_NEAR(summary.log_log_slope, -0.0625, 2e-3);
  double err = 4.0;
  long k = 0;
  for (size_t j = 0; j < summary.steps.size(); ++j) {
    for (; k < summary.steps[j]; ++k) err *= 1.0 - 0.0625 / static_cast<double>(k + 1);
    EXPECT_NEAR(summary.median[j], err, 1e-10);
    EXPECT_EQ(summary.q25[j], summary.q75[j]);
  }
}
