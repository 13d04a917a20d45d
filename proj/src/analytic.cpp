#include "tdlab/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tdlab/errors.hpp"

namespace tdlab {

namespace {

constexpr double kSolveResidualTolerance = 1e-8;
constexpr double kMinReciprocalCondition = 1e-14;

Eigen::PartialPivLU<Eigen::MatrixXd> factor_or_throw(const Eigen::MatrixXd& m, const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const double rcond = lu.rcond();
  if (!(rcond > kMinReciprocalCondition)) {
    std::ostringstream msg;
    msg << what << ": matrix is singular or ill-conditioned (rcond ~ " << rcond << ")";
    throw SolverFailure(msg.str());
  }
  return lu;
}

void check_residual(double residual, double scale, const char* what) {
  if (!(residual <= kSolveResidualTolerance * std::max(1.0, scale))) {
    std::ostringstream msg;
    msg << what << ": solve residual " << residual << " exceeds tolerance";
    throw SolverFailure(msg.str());
  }
}

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

}  // namespace

PolicyEvalProblem::PolicyEvalProblem(MarkovChain chain, Eigen::VectorXd rewards, double gamma,
                                     FeatureMap features)
    : chain_(std::move(chain)),
      rewards_(std::move(rewards)),
      gamma_(gamma),
      features_(std::move(features)),
      pi_(stationary_distribution(chain_)),
      assumption_(check_assumption(features_, pi_, gamma_)) {
  const Eigen::MatrixXd& phi = features_.matrix();
  const int s = n_states();
  const int d = dim();
  expected_next_phi_ = chain_.transition() * phi;
  f2_.reserve(s);
  for (int i = 0; i < s; ++i) {
    const Eigen::VectorXd phi_i = phi.row(i).transpose();
    f2_.push_back(gamma_ * phi_i * expected_next_phi_.row(i) - phi_i * phi_i.transpose());
  }
  const Eigen::MatrixXd phiT_D = phi.transpose() * pi_.pi.asDiagonal();
  mf_matrix_ = gamma_ * phiT_D * expected_next_phi_ - phiT_D * phi + Eigen::MatrixXd::Identity(d, d);
  mf_offset_ = phiT_D * rewards_;
}

PolicyEvalProblem PolicyEvalProblem::create(MarkovChain chain, Eigen::VectorXd rewards, double gamma,
                                            FeatureMap features) {
  if (rewards.size() != chain.n_states()) {
    std::ostringstream msg;
    msg << "rewards has " << rewards.size() << " entries, chain has " << chain.n_states() << " states";
    throw DimensionMismatch(msg.str());
  }
  if (features.n_states() != chain.n_states()) {
    std::ostringstream msg;
    msg << "feature matrix has " << features.n_states() << " rows, chain has " << chain.n_states()
        << " states";
    throw DimensionMismatch(msg.str());
  }
  if (!rewards.allFinite()) throw ValidationError("rewards must be finite");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    std::ostringstream msg;
    msg << "gamma = " << gamma << " must lie in (0,1)";
    throw ValidationError(msg.str());
  }
  return PolicyEvalProblem(std::move(chain), std::move(rewards), gamma, std::move(features));
}

Eigen::VectorXd PolicyEvalProblem::F1(StateIndex i) const {
  return features_.row(i).transpose() * rewards_(i);
}

Eigen::VectorXd F(const PolicyEvalProblem& problem, const Eigen::VectorXd& x, StateIndex i) {
  return problem.F1(i) + problem.F2(i) * x + x;
}

Eigen::VectorXd mean_field(const PolicyEvalProblem& problem, const Eigen::VectorXd& x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(problem.dim());
  const auto& pi = problem.stationary().pi;
  for (int i = 0; i < problem.n_states(); ++i) out += pi(i) * F(problem, x, i);
  return out;
}

Eigen::VectorXd mean_field_affine(const PolicyEvalProblem& problem, const Eigen::VectorXd& x) {
  return problem.mean_field_matrix() * x + problem.mean_field_offset();
}

Eigen::VectorXd fixed_point(const PolicyEvalProblem& problem) {
  if (!problem.assumption().satisfied)
    throw AssumptionViolated("fixed point requires lambda_M below the feature-scale threshold");
  const Eigen::MatrixXd& phi = problem.features().matrix();
  const Eigen::MatrixXd phiT_D = phi.transpose() * problem.stationary().pi.asDiagonal();
  const Eigen::MatrixXd system = phiT_D * phi - problem.gamma() * phiT_D * problem.expected_next_features();
  const Eigen::VectorXd rhs = phiT_D * problem.rewards();
  const auto lu = factor_or_throw(system, "fixed point");
  Eigen::VectorXd x_star = lu.solve(rhs);
  check_residual((system * x_star - rhs).norm(), rhs.norm(), "fixed point");
  check_residual((mean_field(problem, x_star) - x_star).norm(), x_star.norm(), "fixed point");
  return x_star;
}

Eigen::VectorXd exact_value_function(const PolicyEvalProblem& problem) {
  const int s = problem.n_states();
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(s, s) - problem.gamma() * problem.chain().transition();
  const auto lu = factor_or_throw(system, "value function");
  Eigen::VectorXd v = lu.solve(problem.rewards());
  check_residual((system * v - problem.rewards()).norm(), problem.rewards().norm(), "value function");
  return v;
}

double contraction_factor(const PolicyEvalProblem& problem) {
  const auto& report = problem.assumption();
  if (!report.satisfied) {
    std::ostringstream msg;
    msg << "lambda_M = " << report.lambda_M << " is not below " << report.threshold
        << "; rescale features by a factor < " << report.suggested_rescale;
    throw AssumptionViolated(msg.str());
  }
  const Eigen::MatrixXd& phi = problem.features().matrix();
  const Eigen::MatrixXd gram = phi.transpose() * problem.stationary().pi.asDiagonal() * phi;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double mu_min = eig.eigenvalues()(0);
  const double gamma = problem.gamma();
  const double lam = report.lambda_M;
  const double inner = 1.0 - mu_min * (2.0 * (1.0 - gamma) - lam * lam * (1.0 + gamma) * (1.0 + gamma));
  const double alpha = std::sqrt(std::max(inner, 0.0));
  if (!(alpha > 0.0 && alpha < 1.0)) {
    std::ostringstream msg;
    msg << "contraction factor " << alpha << " outside (0,1)";
    throw AssumptionViolated(msg.str());
  }
  return alpha;
}

Eigen::MatrixXd solve_centered_poisson(const MarkovChain& chain, const StationaryDistribution& pi,
                                       const Eigen::MatrixXd& g, StateIndex anchor) {
  const int s = chain.n_states();
  if (g.rows() != s) throw DimensionMismatch("Poisson integrand must have one row per state");
  if (anchor < 0 || anchor >= s) throw ValidationError("anchor state out of range");
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(s, s) - chain.transition();
  system.row(anchor).setZero();
  system(anchor, anchor) = 1.0;
  Eigen::MatrixXd rhs = g.rowwise() - pi.pi.transpose() * g;
  rhs.row(anchor).setZero();
  const auto lu = factor_or_throw(system, "Poisson equation");
  Eigen::MatrixXd u = lu.solve(rhs);
  u.row(anchor).setZero();
  return u;
}

double poisson_residual(const MarkovChain& chain, const StationaryDistribution& pi,
                        const Eigen::MatrixXd& g, const Eigen::MatrixXd& u) {
  // u(i) - g(i) + pi.g - sum_j p(j|i) u(j)
  const Eigen::MatrixXd r = u - (g.rowwise() - pi.pi.transpose() * g) - chain.transition() * u;
  return r.size() == 0 ? 0.0 : r.cwiseAbs().maxCoeff();
}

PoissonSolution poisson_solve(const PolicyEvalProblem& problem, StateIndex anchor) {
  const int s = problem.n_states();
  const int d = problem.dim();
  Eigen::MatrixXd g_u(s, d);
  Eigen::MatrixXd g_w(s, d * d);
  for (int i = 0; i < s; ++i) {
    g_u.row(i) = problem.F1(i).transpose();
    g_w.row(i) = problem.F2(i).reshaped().transpose();
  }
  const auto& chain = problem.chain();
  const auto& pi = problem.stationary();
  const Eigen::MatrixXd u = solve_centered_poisson(chain, pi, g_u, anchor);
  const Eigen::MatrixXd w = solve_centered_poisson(chain, pi, g_w, anchor);

  PoissonSolution out;
  out.anchor_state = anchor;
  out.max_residual_U = poisson_residual(chain, pi, g_u, u);
  out.max_residual_W = poisson_residual(chain, pi, g_w, w);
  check_residual(out.max_residual_U, g_u.size() ? g_u.cwiseAbs().maxCoeff() : 0.0, "Poisson U");
  check_residual(out.max_residual_W, g_w.size() ? g_w.cwiseAbs().maxCoeff() : 0.0, "Poisson W");
  out.U.reserve(s);
  out.W.reserve(s);
  for (int i = 0; i < s; ++i) {
    out.U.emplace_back(u.row(i).transpose());
    out.W.emplace_back(w.row(i).transpose().reshaped(d, d));
  }
  return out;
}

double ConstantsBundle::tail_branch_C(double a_n0) const {
  const double margin = 1.0 - alpha - a_n0 * c1;
  return std::sqrt(static_cast<double>(dim)) * c3 *
         (2.0 + x_star_norm + (a_n0 * (c2 + 1.0) + 1.0) / margin);
}

ConstantsBundle compute_constants(const PolicyEvalProblem& problem, const Eigen::VectorXd& x_star,
                                  const PoissonSolution& poisson) {
  const int s = problem.n_states();
  const Eigen::MatrixXd& phi = problem.features().matrix();
  const Eigen::MatrixXd& expected_next = problem.expected_next_features();
  const double gamma = problem.gamma();
  const Eigen::VectorXd row_norms = phi.rowwise().norm();

  ConstantsBundle c;
  c.dim = problem.dim();
  c.alpha = contraction_factor(problem);
  c.lambda_M = problem.assumption().lambda_M;
  c.x_star_norm = x_star.norm();
  for (int i = 0; i < s; ++i) {
    c.U_max = std::max(c.U_max, poisson.U[i].norm());
    c.W_max = std::max(c.W_max, spectral_norm(poisson.W[i]));
    c.K1 = std::max(c.K1, row_norms(i) * std::abs(problem.rewards()(i)));
    for (int j = 0; j < s; ++j) {
      // ||phi(i) (gamma phi(j) - phi(i))^T|| for the rank-one increment matrix.
      c.K2 = std::max(c.K2, row_norms(i) * (gamma * phi.row(j) - phi.row(i)).norm());
      // M_{k+1} = gamma phi(i) (phi(j) - E[phi(Y_{k+1}) | Y_k = i])^T over
      // realizable transitions i -> j.
      if (problem.chain().p(i, j) > 0.0)
        c.M_max = std::max(c.M_max, gamma * row_norms(i) * (phi.row(j) - expected_next.row(i)).norm());
    }
  }
  c.c1 = c.W_max * (4.0 + c.K2);
  c.c2 = 4.0 * c.U_max + c.K1 * c.W_max + c.c1 * c.x_star_norm;
  c.c3 = std::max(c.M_max + 2.0 * c.W_max, 2.0 * c.U_max);
  return c;
}

AnalyticSolution solve_analytic(const PolicyEvalProblem& problem, StateIndex anchor) {
  AnalyticSolution sol;
  sol.pi = problem.stationary();
  sol.x_star = fixed_point(problem);
  sol.V_exact = exact_value_function(problem);
  sol.V_approx = problem.features().matrix() * sol.x_star;
  sol.poisson = poisson_solve(problem, anchor);
  sol.constants = compute_constants(problem, sol.x_star, sol.poisson);
  sol.fixed_point_residual = (mean_field(problem, sol.x_star) - sol.x_star).norm();
  const Eigen::VectorXd target =
      problem.rewards() + problem.gamma() * problem.chain().transition() * sol.V_approx;
  sol.projection_residual = (sol.V_approx - project_D(target, problem.features(), sol.pi)).norm();
  return sol;
}

}  // namespace tdlab
