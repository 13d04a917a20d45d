#pragma once

#include <Eigen/Dense>
#include <vector>

#include "tdlab/feature_space.hpp"
#include "tdlab/markov.hpp"

namespace tdlab {

/// A complete policy-evaluation instance: chain, rewards, discount, features.
///
/// Construction validates dimensions and the discount, computes the
/// stationary distribution, and caches the per-state pieces of the TD(0)
/// update. A problem that fails the feature-scale assumption can still be
/// built; `assumption().satisfied` carries the verdict and operations that
/// need it throw AssumptionViolated.
class PolicyEvalProblem {
 public:
  static PolicyEvalProblem create(MarkovChain chain, Eigen::VectorXd rewards, double gamma,
                                  FeatureMap features);

  const MarkovChain& chain() const { return chain_; }
  const Eigen::VectorXd& rewards() const { return rewards_; }
  double gamma() const { return gamma_; }
  const FeatureMap& features() const { return features_; }
  const StationaryDistribution& stationary() const { return pi_; }
  const AssumptionReport& assumption() const { return assumption_; }

  int n_states() const { return chain_.n_states(); }
  int dim() const { return features_.dim(); }

  /// Row i is sum_j p(j|i) phi(j)^T.
  const Eigen::MatrixXd& expected_next_features() const { return expected_next_phi_; }

  /// F1(i) = phi(i) r(i).
  Eigen::VectorXd F1(StateIndex i) const;
  /// F2(i) = gamma phi(i) sum_j p(j|i) phi(j)^T - phi(i) phi(i)^T.
  const Eigen::MatrixXd& F2(StateIndex i) const { return f2_[i]; }

  /// Affine form of the mean-field map, x -> A x + b, with
  /// A = gamma Phi^T D P Phi - Phi^T D Phi + I and b = Phi^T D r.
  const Eigen::MatrixXd& mean_field_matrix() const { return mf_matrix_; }
  const Eigen::VectorXd& mean_field_offset() const { return mf_offset_; }

 private:
  PolicyEvalProblem(MarkovChain chain, Eigen::VectorXd rewards, double gamma, FeatureMap features);

  MarkovChain chain_;
  Eigen::VectorXd rewards_;
  double gamma_;
  FeatureMap features_;
  StationaryDistribution pi_;
  AssumptionReport assumption_;
  Eigen::MatrixXd expected_next_phi_;
  std::vector<Eigen::MatrixXd> f2_;
  Eigen::MatrixXd mf_matrix_;
  Eigen::VectorXd mf_offset_;
};

/// F(x, i) = F1(i) + F2(i) x + x.
Eigen::VectorXd F(const PolicyEvalProblem& problem, const Eigen::VectorXd& x, StateIndex i);

/// sum_i pi(i) F(x, i), evaluated state by state.
Eigen::VectorXd mean_field(const PolicyEvalProblem& problem, const Eigen::VectorXd& x);

/// Same map through the cached affine form; used on hot paths.
Eigen::VectorXd mean_field_affine(const PolicyEvalProblem& problem, const Eigen::VectorXd& x);

/// Solves (Phi^T D Phi - gamma Phi^T D P Phi) x* = Phi^T D r.
Eigen::VectorXd fixed_point(const PolicyEvalProblem& problem);

/// Solves (I - gamma P) V = r.
Eigen::VectorXd exact_value_function(const PolicyEvalProblem& problem);

/// Contraction factor of the mean-field map in the Euclidean norm:
/// sqrt(1 - mu_min (2(1-gamma) - lambda_M^2 (1+gamma)^2)) where mu_min is
/// the smallest eigenvalue of Phi^T D Phi. Throws AssumptionViolated.
double contraction_factor(const PolicyEvalProblem& problem);

/// Anchored solutions of the Poisson equations for F1 (vector valued) and
/// F2 (matrix valued). U(anchor) and W(anchor) are exactly zero.
struct PoissonSolution {
  StateIndex anchor_state = 0;
  std::vector<Eigen::VectorXd> U;  // U[i] in R^d
  std::vector<Eigen::MatrixXd> W;  // W[i] in R^{d x d}
  double max_residual_U = 0.0;
  double max_residual_W = 0.0;
};

PoissonSolution poisson_solve(const PolicyEvalProblem& problem, StateIndex anchor);

/// Solves (I - P) u = g - (pi . g) column by column with row `anchor`
/// replaced by u(anchor) = 0. Exposed for oracle tests.
Eigen::MatrixXd solve_centered_poisson(const MarkovChain& chain, const StationaryDistribution& pi,
                                       const Eigen::MatrixXd& g, StateIndex anchor);

/// Residual of the anchored Poisson equation, max over states and columns.
double poisson_residual(const MarkovChain& chain, const StationaryDistribution& pi,
                        const Eigen::MatrixXd& g, const Eigen::MatrixXd& u);

struct ConstantsBundle {
  double U_max = 0.0;
  double W_max = 0.0;
  double M_max = 0.0;
  double K1 = 0.0;
  double K2 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double alpha = 0.0;
  double lambda_M = 0.0;
  double x_star_norm = 0.0;
  int dim = 0;

  /// Threshold between the two branches of the per-step tail bound; depends
  /// on the step size at n0.
  double tail_branch_C(double a_n0) const;
};

ConstantsBundle compute_constants(const PolicyEvalProblem& problem, const Eigen::VectorXd& x_star,
                                  const PoissonSolution& poisson);

struct AnalyticSolution {
  StationaryDistribution pi;
  Eigen::VectorXd x_star;
  Eigen::VectorXd V_exact;
  Eigen::VectorXd V_approx;
  PoissonSolution poisson;
  ConstantsBundle constants;
  double fixed_point_residual = 0.0;   // ||mean_field(x*) - x*||
  double projection_residual = 0.0;    // ||Phi x* - Pi(r + gamma P Phi x*)||
};

/// Everything above in one pass. Requires the feature-scale assumption.
AnalyticSolution solve_analytic(const PolicyEvalProblem& problem, StateIndex anchor = 0);

}  // namespace tdlab
