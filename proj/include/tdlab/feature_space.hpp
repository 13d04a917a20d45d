#pragma once

#include <Eigen/Dense>

#include "tdlab/markov.hpp"

namespace tdlab {

/// s x d feature matrix; row i is phi(i)^T. Columns must be linearly
/// independent (scale-invariant test on the singular values).
class FeatureMap {
 public:
  static constexpr double kRankTolerance = 1e-10;

  static FeatureMap build(Eigen::MatrixXd phi);

  int n_states() const { return static_cast<int>(phi_.rows()); }
  int dim() const { return static_cast<int>(phi_.cols()); }
  const Eigen::MatrixXd& matrix() const { return phi_; }
  auto row(StateIndex i) const { return phi_.row(i); }

 private:
  explicit FeatureMap(Eigen::MatrixXd phi) : phi_(std::move(phi)) {}
  Eigen::MatrixXd phi_;
};

struct AssumptionReport {
  double lambda_M = 0.0;
  double threshold = 0.0;  // sqrt(2(1 - gamma)) / (1 + gamma)
  bool satisfied = false;  // lambda_M < threshold
  double max_row_norm = 0.0;
  bool row_condition_satisfied = false;  // max_i ||phi(i)|| <= threshold
  /// Multiplying Phi by anything strictly below this makes the check pass.
  double suggested_rescale = 0.0;
};

/// sqrt(sum_i pi(i) x(i)^2).
double weighted_norm(const Eigen::VectorXd& x, const StationaryDistribution& pi);

/// Largest singular value of Phi^T sqrt(D).
double lambda_M(const FeatureMap& features, const StationaryDistribution& pi);

AssumptionReport check_assumption(const FeatureMap& features, const StationaryDistribution& pi,
                                  double gamma);

/// D-orthogonal projection Phi (Phi^T D Phi)^{-1} Phi^T D v onto Range(Phi).
Eigen::VectorXd project_D(const Eigen::VectorXd& v, const FeatureMap& features,
                          const StationaryDistribution& pi);

}  // namespace tdlab
