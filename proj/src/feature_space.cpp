#include "tdlab/feature_space.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "tdlab/errors.hpp"

namespace tdlab {

FeatureMap FeatureMap::build(Eigen::MatrixXd phi) {
  if (phi.rows() < 1 || phi.cols() < 1) throw DimensionMismatch("feature matrix must be non-empty");
  if (phi.cols() > phi.rows()) {
    std::ostringstream msg;
    msg << "need s >= d, got s=" << phi.rows() << " d=" << phi.cols();
    throw DimensionMismatch(msg.str());
  }
  if (!phi.allFinite()) throw ValidationError("feature matrix has non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi);
  const auto& sv = svd.singularValues();
  const double largest = sv(0);
  const double smallest = sv(sv.size() - 1);
  if (!(largest > 0.0) || !(smallest > kRankTolerance * largest)) {
    std::ostringstream msg;
    msg << "feature columns are linearly dependent (singular values " << largest << " .. " << smallest
        << ")";
    throw RankDeficient(msg.str());
  }
  return FeatureMap(std::move(phi));
}

double weighted_norm(const Eigen::VectorXd& x, const StationaryDistribution& pi) {
  if (x.size() != pi.pi.size()) throw DimensionMismatch("weighted_norm: vector and pi sizes differ");
  return std::sqrt(pi.pi.dot(x.cwiseAbs2()));
}

double lambda_M(const FeatureMap& features, const StationaryDistribution& pi) {
  if (features.n_states() != pi.size()) throw DimensionMismatch("lambda_M: Phi rows and pi differ");
  const Eigen::MatrixXd psi = features.matrix().transpose() * pi.sqrt_pi().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(psi);
  return svd.singularValues()(0);
}

AssumptionReport check_assumption(const FeatureMap& features, const StationaryDistribution& pi,
                                  double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("discount factor must lie in (0,1)");
  AssumptionReport report;
  report.lambda_M = lambda_M(features, pi);
  report.threshold = std::sqrt(2.0 * (1.0 - gamma)) / (1.0 + gamma);
  report.satisfied = report.lambda_M < report.threshold;
  report.max_row_norm = features.matrix().rowwise().norm().maxCoeff();
  report.row_condition_satisfied = report.max_row_norm <= report.threshold;
  report.suggested_rescale = report.lambda_M > 0.0 ? report.threshold / report.lambda_M
                                                   : std::numeric_limits<double>::infinity();
  return report;
}

Eigen::VectorXd project_D(const Eigen::VectorXd& v, const FeatureMap& features,
                          const StationaryDistribution& pi) {
  if (v.size() != features.n_states() || pi.size() != features.n_states())
    throw DimensionMismatch("project_D: dimensions differ");
  const Eigen::MatrixXd& phi = features.matrix();
  const Eigen::MatrixXd gram = phi.transpose() * pi.pi.asDiagonal() * phi;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14) {
    std::ostringstream msg;
    msg << "Phi^T D Phi is ill-conditioned (rcond ~ " << ldlt.rcond() << ")";
    throw SolverFailure(msg.str());
  }
  const Eigen::VectorXd weights = ldlt.solve(phi.transpose() * pi.pi.cwiseProduct(v));
  return phi * weights;
}

}  // namespace tdlab
