#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tdlab/analytic.hpp"
#include "tdlab/rng.hpp"
#include "tdlab/schedule.hpp"

namespace tdlab {

/// One online TD(0) update:
/// x + a phi(y) (r(y) + gamma phi(y_next)^T x - phi(y)^T x).
Eigen::VectorXd td0_step(const PolicyEvalProblem& problem, const Eigen::VectorXd& x, StateIndex y,
                         StateIndex y_next, double a_n);

/// The three martingale-difference terms of a transition y -> y_next at x:
/// M_{k+1} x, U~_{k+1} and W~_{k+1} x.
struct MartingaleIncrements {
  Eigen::VectorXd martingale_x;  // M_{k+1} x
  Eigen::VectorXd poisson_U;     // U(y_next) - sum_j p(j|y) U(j)
  Eigen::VectorXd poisson_Wx;    // (W(y_next) - sum_j p(j|y) W(j)) x
};

/// Precomputes the conditional expectations the increments subtract.
class MartingaleTerms {
 public:
  MartingaleTerms(const PolicyEvalProblem& problem, const PoissonSolution& poisson);

  void evaluate(StateIndex y, StateIndex y_next, const Eigen::VectorXd& x, MartingaleIncrements& out) const;
  MartingaleIncrements evaluate(StateIndex y, StateIndex y_next, const Eigen::VectorXd& x) const;

 private:
  const PolicyEvalProblem* problem_;
  const PoissonSolution* poisson_;
  std::vector<Eigen::VectorXd> expected_U_;
  std::vector<Eigen::MatrixXd> expected_W_;
};

/// Per-step split of an update x_{k+1} - x_k into the mean-field drift,
/// the martingale term tau1 = a M_{k+1} x_k and the Markov term
/// tau2 = a (F(x_k, Y_k) - sum_i pi(i) F(x_k, i)).
struct NoiseRecord {
  Eigen::VectorXd drift;
  Eigen::VectorXd tau1;
  Eigen::VectorXd tau2;
  MartingaleIncrements increments;
  double reconstruction_residual = 0.0;
};

struct OnlineRunOptions {
  long n0 = 0;
  long horizon = 0;
  Eigen::VectorXd initial_x;
  StateIndex initial_state = 0;
  /// Store a NoiseRecord per step (memory O(d) per step).
  bool log_noise = false;
  /// Track ||sum_k chi(m,k+1) a(k) (M x_k + W~ x_k + U~)|| for every m.
  bool track_martingale_sum = false;
  /// Keep x and z vectors (full history or checkpoints). The scalar series
  /// are always kept.
  bool store_iterates = true;
  long full_history_limit = 100'000;
  long checkpoint_every = 1'000;
};

/// Sample path, iterates and comparison iterates from step n0 to horizon.
/// Index j of every per-step series refers to step m = n0 + j.
struct TrajectoryRecord {
  long n0 = 0;
  long horizon = 0;
  std::vector<StateIndex> states;   // Y_m
  std::vector<double> error;        // ||x_m - x*||
  std::vector<double> deviation;    // ||x_m - z_m||
  std::vector<double> x_prime;      // max_{n0 <= k <= m} ||x_k - z_k||
  /// Steps at which x and z were stored: every step when the run is at most
  /// full_history_limit long, otherwise every checkpoint_every steps plus the
  /// last one.
  std::vector<long> stored_steps;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> z;
  std::vector<NoiseRecord> noise;               // k = n0 .. horizon-1
  std::vector<double> martingale_sum_norm;      // m = n0 .. horizon-1
  double max_reconstruction_residual = 0.0;

  /// Iterate and state at the horizon, for continuing the path.
  Eigen::VectorXd final_x;
  StateIndex final_state = 0;

  /// True when every step's x and z were stored.
  bool full_history = false;
};

/// Runs the online recursion along one sampled path. z starts at x_{n0}.
/// Throws NonFinite with the offending step if an iterate overflows.
TrajectoryRecord run_online(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                            const StepSchedule& schedule, const OnlineRunOptions& options, RngStream& rng);

/// Noiseless mean-field recursion z_{n+1} = z_n + a(n)(sum_i pi(i)F(z_n,i) - z_n)
/// for n0 <= n < horizon. Returns z_{n0}, ..., z_{horizon}.
std::vector<Eigen::VectorXd> run_deterministic(const PolicyEvalProblem& problem, const StepSchedule& schedule,
                                               long n0, long horizon, const Eigen::VectorXd& initial_z);

}  // namespace tdlab
