#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tdlab/analytic.hpp"
#include "tdlab/bound_calculus.hpp"
#include "tdlab/schedule.hpp"

namespace tdlab {

/// 95% Wilson score interval for k successes out of n.
struct ProportionEstimate {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  long successes = 0;
  long trials = 0;
  double half_width() const { return 0.5 * (upper - lower); }
};

ProportionEstimate wilson_interval(long successes, long trials);

struct InitialStatePolicy {
  enum class Kind { kStationary, kUniform, kFixed };
  Kind kind = Kind::kStationary;
  StateIndex fixed_state = 0;
};

struct ExperimentConfig {
  long n0 = 100;
  long horizon = 10'000;
  long n_trajectories = 1'000;
  std::uint64_t master_seed = 0;
  double epsilon = 1.0;
  double delta = 1.0;
  /// Extra sweep values; the (epsilon, delta) pair above is always evaluated.
  std::vector<double> epsilon_grid;
  std::vector<double> delta_grid;
  /// Fitted from simulated martingale tails when absent.
  std::optional<double> D_const;
  /// A user-supplied analytic bound on P(||x_{n0} - x*|| > eps). When absent
  /// the empirical estimate from the same ensemble is used.
  std::optional<double> p_init_bound;
  InitialStatePolicy initial_state;
  /// Zero vector when empty.
  Eigen::VectorXd initial_x;
  /// Thresholds for the D fit; chosen from the pooled samples when empty.
  std::vector<double> fit_delta_grid;
  /// Number of m values (evenly spaced in (n0, horizon)) used by the D fit.
  int fit_m_points = 20;
  /// Number of m values at which error quantiles are kept.
  int quantile_points = 200;
  int jobs = 1;
};

/// Throws ValidationError when the config is inconsistent with the problem.
void validate_config(const ExperimentConfig& config, const PolicyEvalProblem& problem);

/// One (epsilon, delta) point evaluated on the shared trajectory ensemble.
struct GridPointResult {
  double epsilon = 0.0;
  double delta = 0.0;
  long violations = 0;
  ProportionEstimate alltime;        // fraction with no violation
  ProportionEstimate p_init;         // fraction with ||x_{n0} - x*|| > epsilon
  double p_init_used = 0.0;
  double floor_term = 0.0;
  double tail_sum = 0.0;
  double theoretical_lower_bound = 0.0;
  /// empirical >= theoretical - 2 Wilson half-widths.
  bool consistent = false;
};

struct TailPoint {
  long m = 0;
  double delta = 0.0;
  double p_hat = 0.0;
};

struct DFit {
  double D = 0.0;           // least-squares slope through the origin
  double D_envelope = 0.0;  // largest D under which every point satisfies the bound
  long n_points = 0;
  double rms_residual = 0.0;
  std::vector<TailPoint> points;
  std::vector<double> residuals;
};

/// Fits -log(p_hat/(2d)) = D delta^2 / beta_{n0}(m) over points with
/// 0 < p_hat < 1. Throws InsufficientTailData when fewer than three points
/// are usable or the fitted slope is not positive.
DFit fit_D_from_tail_points(const std::vector<TailPoint>& points, long n0, double d1, double d2, int d);

/// samples[j] holds the simulated martingale-sum norms at step ms[j]; the
/// empirical exceedance frequency over each delta gives the tail points.
DFit fit_D_from_samples(const std::vector<std::vector<double>>& samples, const std::vector<long>& ms,
                        const std::vector<double>& delta_grid, long n0, double d1, double d2, int d);

struct ExperimentResult {
  ExperimentConfig config;
  std::string p_init_source;             // "empirical" or "analytic"
  double D_used = 0.0;
  std::optional<DFit> fit;
  GridPointResult primary;
  std::vector<GridPointResult> grid;     // epsilon-major order
  std::vector<double> radius;            // primary radius, m = n0 .. horizon
  /// Sparse per-m violation counts for the primary point: (m, count) with
  /// count > 0, increasing m.
  std::vector<std::pair<long, long>> per_m_violations;
  std::vector<long> quantile_steps;
  std::vector<double> error_median;
  std::vector<double> error_q90;
  std::vector<double> error_max;
  double wall_time_seconds = 0.0;
};

/// Fraction of trajectories with ||x_{n0} - x*|| > epsilon after running
/// from step 0, with its Wilson interval.
ProportionEstimate estimate_p_init(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                                   const StepSchedule& schedule, const ExperimentConfig& config);

ExperimentResult run_alltime_experiment(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                                        const StepSchedule& schedule, const ExperimentConfig& config);

struct ConvergenceSummary {
  std::vector<long> steps;
  std::vector<double> q25;
  std::vector<double> median;
  std::vector<double> q75;
  /// Least-squares slope of log(median) against log(n) over the steps >= 10.
  double log_log_slope = 0.0;
};

/// Error quantiles across n_trajectories runs from step 0 to the horizon.
/// Uses `steps` when given, otherwise a log-spaced grid.
ConvergenceSummary convergence_diagnostics(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                                           const StepSchedule& schedule, const ExperimentConfig& config,
                                           std::vector<long> steps = {});

/// Linear-interpolation quantile of an unsorted sample (copied).
double quantile(std::vector<double> values, double q);

}  // namespace tdlab
