#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tdlab/rng.hpp"

namespace tdlab {

using StateIndex = int;

/// Row-stochastic transition matrix of a finite, irreducible, aperiodic chain.
class MarkovChain {
 public:
  static constexpr double kRowSumTolerance = 1e-12;

  /// Validates `transition` and builds the chain.
  /// Throws NotStochastic, NotIrreducible or Periodic.
  static MarkovChain build(Eigen::MatrixXd transition);

  int n_states() const { return static_cast<int>(transition_.rows()); }
  const Eigen::MatrixXd& transition() const { return transition_; }
  double p(StateIndex from, StateIndex to) const { return transition_(from, to); }

  /// Draws the successor of `state` by inverse-CDF lookup in its row.
  StateIndex sample_next(StateIndex state, RngStream& rng) const;

 private:
  explicit MarkovChain(Eigen::MatrixXd transition);

  Eigen::MatrixXd transition_;
  // Row-wise cumulative sums, row-major so each lookup touches one row.
  std::vector<std::vector<double>> cumulative_;
};

struct StationaryDistribution {
  Eigen::VectorXd pi;

  int size() const { return static_cast<int>(pi.size()); }
  Eigen::MatrixXd D() const { return pi.asDiagonal(); }
  Eigen::VectorXd sqrt_pi() const { return pi.cwiseSqrt(); }
};

/// Solves (P^T - I) pi = 0 with one balance equation replaced by sum(pi) = 1.
/// Throws SolverFailure if the system is singular or the result is not a
/// strictly positive invariant vector.
StationaryDistribution stationary_distribution(const MarkovChain& chain);

/// Samples Y_0 = initial_state, Y_1, ..., Y_{length-1}.
std::vector<StateIndex> sample_path(const MarkovChain& chain, StateIndex initial_state, long length,
                                    RngStream& rng);

/// Draws a state from an arbitrary probability vector.
StateIndex sample_from(const Eigen::VectorXd& probabilities, RngStream& rng);

/// Monte Carlo estimate of E_i[ sum_{m=0}^{tau-1} g(Y_m) ] for every start
/// state i, where tau = min{n > 0 : Y_n = anchor}. Row i of `g` is g(i); the
/// columns are independent scalar functions.
struct HittingSumEstimate {
  Eigen::MatrixXd mean;            // s x q
  Eigen::MatrixXd standard_error;  // s x q
  Eigen::VectorXd mean_return_time;
  long cycles_per_state = 0;
};

HittingSumEstimate expected_hitting_sums(const MarkovChain& chain, StateIndex anchor,
                                         const Eigen::MatrixXd& g, long cycles_per_state,
                                         RngStream& rng);

}  // namespace tdlab
