#include "tdlab/td_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "tdlab/errors.hpp"

namespace tdlab {

namespace {
constexpr double kReconstructionTolerance = 1e-10;
}

Eigen::VectorXd td0_step(const PolicyEvalProblem& problem, const Eigen::VectorXd& x, StateIndex y,
                         StateIndex y_next, double a_n) {
  const auto phi_y = problem.features().row(y);
  const auto phi_next = problem.features().row(y_next);
  const double td_error = problem.rewards()(y) + problem.gamma() * phi_next.dot(x) - phi_y.dot(x);
  return x + (a_n * td_error) * phi_y.transpose();
}

MartingaleTerms::MartingaleTerms(const PolicyEvalProblem& problem, const PoissonSolution& poisson)
    : problem_(&problem), poisson_(&poisson) {
  const int s = problem.n_states();
  const int d = problem.dim();
  const auto& P = problem.chain().transition();
  expected_U_.assign(s, Eigen::VectorXd::Zero(d));
  expected_W_.assign(s, Eigen::MatrixXd::Zero(d, d));
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      if (P(i, j) == 0.0) continue;
      expected_U_[i] += P(i, j) * poisson.U[j];
      expected_W_[i] += P(i, j) * poisson.W[j];
    }
}

void MartingaleTerms::evaluate(StateIndex y, StateIndex y_next, const Eigen::VectorXd& x,
                               MartingaleIncrements& out) const {
  const auto& phi = problem_->features().matrix();
  const double innovation = (phi.row(y_next) - problem_->expected_next_features().row(y)).dot(x);
  out.martingale_x = (problem_->gamma() * innovation) * phi.row(y).transpose();
  out.poisson_U = poisson_->U[y_next] - expected_U_[y];
  out.poisson_Wx = (poisson_->W[y_next] - expected_W_[y]) * x;
}

MartingaleIncrements MartingaleTerms::evaluate(StateIndex y, StateIndex y_next, const Eigen::VectorXd& x) const {
  MartingaleIncrements out;
  evaluate(y, y_next, x, out);
  return out;
}

TrajectoryRecord run_online(const PolicyEvalProblem& problem, const AnalyticSolution& solution,
                            const StepSchedule& schedule, const OnlineRunOptions& options, RngStream& rng) {
  const long n0 = options.n0;
  const long horizon = options.horizon;
  const int d = problem.dim();
  if (n0 < 0 || horizon < n0) throw ValidationError("run_online needs 0 <= n0 <= horizon");
  if (options.initial_x.size() != d) throw DimensionMismatch("initial iterate has the wrong dimension");
  if (options.initial_state < 0 || options.initial_state >= problem.n_states())
    throw ValidationError("initial state out of range");

  const long length = horizon - n0 + 1;
  const bool full = length <= options.full_history_limit;
  const long every = std::max(1L, options.checkpoint_every);

  TrajectoryRecord rec;
  rec.n0 = n0;
  rec.horizon = horizon;
  rec.full_history = full && options.store_iterates;
  rec.states.reserve(static_cast<size_t>(length));
  rec.error.reserve(static_cast<size_t>(length));
  rec.deviation.reserve(static_cast<size_t>(length));
  rec.x_prime.reserve(static_cast<size_t>(length));
  if (options.log_noise) rec.noise.reserve(static_cast<size_t>(length - 1));

  const bool need_increments = options.log_noise || options.track_martingale_sum;
  std::optional<MartingaleTerms> terms;
  if (need_increments) terms.emplace(problem, solution.poisson);

  const Eigen::VectorXd& x_star = solution.x_star;
  Eigen::VectorXd x = options.initial_x;
  Eigen::VectorXd z = options.initial_x;
  Eigen::VectorXd x_next(d);
  Eigen::VectorXd mf(d);
  Eigen::VectorXd mart_sum = Eigen::VectorXd::Zero(d);
  MartingaleIncrements inc;
  StateIndex y = options.initial_state;
  double sup_dev = 0.0;

  const auto& phi = problem.features().matrix();
  const auto& rewards = problem.rewards();
  const double gamma = problem.gamma();

  for (long m = n0;; ++m) {
    const double dev = (x - z).norm();
    sup_dev = std::max(sup_dev, dev);
    rec.states.push_back(y);
    rec.error.push_back((x - x_star).norm());
    rec.deviation.push_back(dev);
    rec.x_prime.push_back(sup_dev);
    if (options.store_iterates && (full || (m - n0) % every == 0 || m == horizon)) {
      rec.stored_steps.push_back(m);
      rec.x.push_back(x);
      rec.z.push_back(z);
    }
    if (m == horizon) break;

    const double a = schedule.a(m);
    const StateIndex y_next = problem.chain().sample_next(y, rng);

    const double td_error = rewards(y) + gamma * phi.row(y_next).dot(x) - phi.row(y).dot(x);
    x_next = x + (a * td_error) * phi.row(y).transpose();

    if (need_increments) {
      terms->evaluate(y, y_next, x, inc);
      if (options.track_martingale_sum) {
        mart_sum = (1.0 - a) * mart_sum + a * (inc.martingale_x + inc.poisson_Wx + inc.poisson_U);
        rec.martingale_sum_norm.push_back(mart_sum.norm());
      }
    }
    if (options.log_noise) {
      mf.noalias() = problem.mean_field_matrix() * x;
      mf += problem.mean_field_offset();
      NoiseRecord noise;
      noise.drift = a * (mf - x);
      noise.tau1 = a * inc.martingale_x;
      noise.tau2 = a * (F(problem, x, y) - mf);
      noise.reconstruction_residual = (x_next - x - noise.drift - noise.tau1 - noise.tau2).norm();
      if (!(noise.reconstruction_residual <= kReconstructionTolerance * std::max(1.0, x.norm()))) {
        std::ostringstream msg;
        msg << "noise decomposition does not reconstruct the update at step " << m << " (residual "
            << noise.reconstruction_residual << ")";
        throw NumericalError(msg.str());
      }
      rec.max_reconstruction_residual = std::max(rec.max_reconstruction_residual, noise.reconstruction_residual);
      noise.increments = inc;
      rec.noise.push_back(std::move(noise));
    }

    // Comparison iterate.
    mf.noalias() = problem.mean_field_matrix() * z;
    mf += problem.mean_field_offset();
    z += a * (mf - z);

    if (!x_next.allFinite()) {
      std::ostringstream msg;
      msg << "TD(0) iterate became non-finite at step " << m + 1;
      throw NonFinite(msg.str(), m + 1);
    }
    x.swap(x_next);
    y = y_next;
  }
  rec.final_x = x;
  rec.final_state = y;
  return rec;
}

std::vector<Eigen::VectorXd> run_deterministic(const PolicyEvalProblem& problem, const StepSchedule& schedule,
                                               long n0, long horizon, const Eigen::VectorXd& initial_z) {
  if (n0 < 0 || horizon < n0) throw ValidationError("run_deterministic needs 0 <= n0 <= horizon");
  if (initial_z.size() != problem.dim()) throw DimensionMismatch("initial iterate has the wrong dimension");
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<size_t>(horizon - n0 + 1));
  out.push_back(initial_z);
  Eigen::VectorXd z = initial_z;
  for (long n = n0; n < horizon; ++n) {
    z += schedule.a(n) * (mean_field_affine(problem, z) - z);
    out.push_back(z);
  }
  return out;
}

}  // namespace tdlab
