#pragma once

// Shared instances and independent oracles for the test suites. The oracles
// deliberately avoid the production code paths: power iteration instead of
// linear solves, fixed-point iteration instead of the direct system, series
// expansions instead of the anchored Poisson system.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

#include "tdlab/analytic.hpp"
#include "tdlab/config.hpp"

namespace tdtest {

inline std::string source_path(const std::string& rel) { return std::string(TDLAB_SOURCE_DIR) + "/" + rel; }

inline tdlab::PolicyEvalProblem make_problem(const Eigen::MatrixXd& P, const Eigen::VectorXd& r, double gamma,
                                             const Eigen::MatrixXd& Phi) {
  return tdlab::PolicyEvalProblem::create(tdlab::MarkovChain::build(P), r, gamma, tdlab::FeatureMap::build(Phi));
}

/// s = d = 1, phi = 0.5, r = 1, gamma = 0.5.
inline tdlab::PolicyEvalProblem scalar_problem() {
  return make_problem(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Ones(1), 0.5,
                      Eigen::MatrixXd::Constant(1, 1, 0.5));
}

/// Uniform two-state chain with identity features.
inline tdlab::PolicyEvalProblem identity_problem(double gamma, const Eigen::Vector2d& r = {1.0, 0.0}) {
  return make_problem(Eigen::MatrixXd::Constant(2, 2, 0.5), r, gamma, Eigen::MatrixXd::Identity(2, 2));
}

inline tdlab::PolicyEvalProblem load_problem(const std::string& config_name) {
  return tdlab::build_problem(tdlab::load_config(source_path("configs/" + config_name)));
}

inline double assumption_threshold(double gamma) { return std::sqrt(2.0 * (1.0 - gamma)) / (1.0 + gamma); }

/// Stationary distribution by repeated multiplication pi <- pi P.
inline Eigen::VectorXd stationary_by_power(const Eigen::MatrixXd& P) {
  const Eigen::Index s = P.rows();
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(s, 1.0 / static_cast<double>(s));
  for (int it = 0; it < 1'000'000; ++it) {
    Eigen::RowVectorXd next = pi * P;
    next /= next.sum();
    const double change = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (change < 1e-16) break;
  }
  return pi.transpose();
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
inline double top_eigenvalue_by_power(const Eigen::MatrixXd& M) {
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(M.rows(), 1.0, 2.0).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 100'000; ++it) {
    Eigen::VectorXd w = M * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(M * w);
    const bool done = std::abs(next - lambda) < 1e-15 * std::max(1.0, std::abs(next));
    lambda = next;
    v = w;
    if (done) break;
  }
  return lambda;
}

/// Smallest eigenvalue of a symmetric PSD matrix via power iteration on
/// (top * I - M).
inline double bottom_eigenvalue_by_power(const Eigen::MatrixXd& M) {
  const double top = top_eigenvalue_by_power(M);
  const Eigen::MatrixXd shifted = top * Eigen::MatrixXd::Identity(M.rows(), M.cols()) - M;
  return top - top_eigenvalue_by_power(shifted);
}

/// sum_i pi(i) F(x, i), written out loop by loop.
inline Eigen::VectorXd mean_field_oracle(const Eigen::MatrixXd& P, const Eigen::VectorXd& r, double gamma,
                                         const Eigen::MatrixXd& Phi, const Eigen::VectorXd& pi,
                                         const Eigen::VectorXd& x) {
  const Eigen::Index s = P.rows();
  const Eigen::Index d = Phi.cols();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < s; ++i) {
    double next_value = 0.0;
    for (Eigen::Index j = 0; j < s; ++j) next_value += P(i, j) * Phi.row(j).dot(x);
    const double td = r(i) + gamma * next_value - Phi.row(i).dot(x);
    out += pi(i) * (Phi.row(i).transpose() * td + x);
  }
  return out;
}

/// Fixed point of the mean-field map by plain iteration (a contraction).
inline Eigen::VectorXd fixed_point_by_iteration(const Eigen::MatrixXd& P, const Eigen::VectorXd& r, double gamma,
                                                const Eigen::MatrixXd& Phi, const Eigen::VectorXd& pi) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(Phi.cols());
  for (int it = 0; it < 10'000'000; ++it) {
    const Eigen::VectorXd next = mean_field_oracle(P, r, gamma, Phi, pi, x);
    const double change = (next - x).norm();
    x = next;
    if (change < 1e-15 * std::max(1.0, x.norm())) break;
  }
  return x;
}

/// Poisson solution sum_t P^t (g - pi.g), shifted so that row `anchor` is 0.
inline Eigen::MatrixXd poisson_by_series(const Eigen::MatrixXd& P, const Eigen::VectorXd& pi, const Eigen::MatrixXd& g,
                                         int anchor) {
  const Eigen::RowVectorXd mean = pi.transpose() * g;
  Eigen::MatrixXd term = g.rowwise() - mean;
  Eigen::MatrixXd sum = term;
  for (int t = 0; t < 100'000; ++t) {
    term = P * term;
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-17 * std::max(1.0, sum.cwiseAbs().maxCoeff())) break;
  }
  const Eigen::RowVectorXd at_anchor = sum.row(anchor);
  return sum.rowwise() - at_anchor;
}

/// Random irreducible aperiodic chain (all entries positive) with features
/// scaled so that lambda_M = fraction * threshold.
struct RandomInstance {
  Eigen::MatrixXd P;
  Eigen::VectorXd r;
  double gamma;
  Eigen::MatrixXd Phi;
};

inline RandomInstance random_instance(std::uint64_t seed, int s, int d, double gamma, double fraction) {
  std::mt19937_64 gen(seed);
  std::gamma_distribution<double> dirichlet(1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  RandomInstance inst;
  inst.gamma = gamma;
  inst.P.resize(s, s);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) inst.P(i, j) = dirichlet(gen) + 1e-3;
    inst.P.row(i) /= inst.P.row(i).sum();
  }
  inst.r.resize(s);
  for (int i = 0; i < s; ++i) inst.r(i) = unif(gen);
  inst.Phi.resize(s, d);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < d; ++j) inst.Phi(i, j) = normal(gen);
  const Eigen::VectorXd pi = stationary_by_power(inst.P);
  const Eigen::MatrixXd G = inst.Phi.transpose() * pi.asDiagonal() * inst.Phi;
  const double lam = std::sqrt(top_eigenvalue_by_power(G));
  inst.Phi *= fraction * assumption_threshold(gamma) / lam;
  return inst;
}

inline tdlab::PolicyEvalProblem make_problem(const RandomInstance& inst) {
  return make_problem(inst.P, inst.r, inst.gamma, inst.Phi);
}

}  // namespace tdtest
