#include "tdlab/markov.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "tdlab/errors.hpp"

namespace tdlab {

namespace {

// Dense boolean matrix with rows packed into 64-bit words.
class BitMatrix {
 public:
  explicit BitMatrix(int n) : n_(n), words_((n + 63) / 64), bits_(static_cast<size_t>(n) * words_, 0) {}

  void set(int i, int j) { bits_[index(i, j)] |= std::uint64_t{1} << (j % 64); }
  bool get(int i, int j) const { return (bits_[index(i, j)] >> (j % 64)) & 1U; }

  BitMatrix times(const BitMatrix& other) const {
    BitMatrix out(n_);
    for (int i = 0; i < n_; ++i) {
      std::uint64_t* dst = &out.bits_[static_cast<size_t>(i) * words_];
      for (int k = 0; k < n_; ++k) {
        if (!get(i, k)) continue;
        const std::uint64_t* src = &other.bits_[static_cast<size_t>(k) * words_];
        for (int w = 0; w < words_; ++w) dst[w] |= src[w];
      }
    }
    return out;
  }

  bool all_set() const {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j)
        if (!get(i, j)) return false;
    return true;
  }

 private:
  size_t index(int i, int j) const { return static_cast<size_t>(i) * words_ + j / 64; }

  int n_;
  int words_;
  std::vector<std::uint64_t> bits_;
};

std::vector<bool> reachable(const Eigen::MatrixXd& P, bool reverse) {
  const int n = static_cast<int>(P.rows());
  std::vector<bool> seen(n, false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v) {
      const double w = reverse ? P(v, u) : P(u, v);
      if (w > 0.0 && !seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

// An irreducible nonnegative matrix is primitive (the chain is aperiodic) iff
// some power is entrywise positive, and then every power from
// (n-1)^2 + 1 on is positive. Repeated squaring reaches such an exponent.
bool is_primitive(const Eigen::MatrixXd& P) {
  const int n = static_cast<int>(P.rows());
  BitMatrix power(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (P(i, j) > 0.0) power.set(i, j);
  const long target = static_cast<long>(n - 1) * (n - 1) + 1;
  long exponent = 1;
  while (exponent < target) {
    power = power.times(power);
    exponent *= 2;
  }
  return power.all_set();
}

}  // namespace

MarkovChain::MarkovChain(Eigen::MatrixXd transition) : transition_(std::move(transition)) {
  const int n = n_states();
  cumulative_.assign(n, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      acc += transition_(i, j);
      cumulative_[i][j] = acc;
    }
  }
}

MarkovChain MarkovChain::build(Eigen::MatrixXd transition) {
  if (transition.rows() == 0 || transition.rows() != transition.cols()) {
    std::ostringstream msg;
    msg << "transition matrix must be square and non-empty, got " << transition.rows() << "x"
        << transition.cols();
    throw NotStochastic(msg.str());
  }
  const int n = static_cast<int>(transition.rows());
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const double p = transition(i, j);
      if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        std::ostringstream msg;
        msg << "P(" << i << "," << j << ") = " << p << " is not a probability";
        throw NotStochastic(msg.str());
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "row " << i << " sums to " << sum << " (tolerance " << kRowSumTolerance << ")";
      throw NotStochastic(msg.str());
    }
  }

  const auto forward = reachable(transition, false);
  const auto backward = reachable(transition, true);
  for (int i = 0; i < n; ++i) {
    if (!forward[i] || !backward[i]) {
      std::ostringstream msg;
      msg << "chain is not irreducible: state " << i << " does not communicate with state 0";
      throw NotIrreducible(msg.str());
    }
  }
  if (!is_primitive(transition)) throw Periodic("chain is irreducible but periodic");

  return MarkovChain(std::move(transition));
}

StateIndex MarkovChain::sample_next(StateIndex state, RngStream& rng) const {
  const auto& row = cumulative_[state];
  const double u = rng.uniform();
  auto it = std::upper_bound(row.begin(), row.end(), u);
  int j = static_cast<int>(it - row.begin());
  if (j >= n_states()) j = n_states() - 1;  // u above a row sum of 1 - 1e-12
  // Never land on a zero-probability state because of a flat CDF segment.
  while (transition_(state, j) == 0.0 && j > 0) --j;
  return j;
}

StationaryDistribution stationary_distribution(const MarkovChain& chain) {
  const int n = chain.n_states();
  Eigen::MatrixXd system = chain.transition().transpose() - Eigen::MatrixXd::Identity(n, n);
  system.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) throw SolverFailure("stationary balance system is singular");
  Eigen::VectorXd pi = lu.solve(rhs);

  const double residual = (pi.transpose() * chain.transition() - pi.transpose()).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-10) || !(pi.minCoeff() > 0.0)) {
    std::ostringstream msg;
    msg << "stationary solve failed: ||pi P - pi||_inf = " << residual << ", min pi = " << pi.minCoeff()
        << ", rcond ~ " << lu.rcond();
    throw SolverFailure(msg.str());
  }
  pi /= pi.sum();
  return StationaryDistribution{std::move(pi)};
}

std::vector<StateIndex> sample_path(const MarkovChain& chain, StateIndex initial_state, long length,
                                    RngStream& rng) {
  if (length < 1) throw ValidationError("sample_path length must be at least 1");
  if (initial_state < 0 || initial_state >= chain.n_states())
    throw ValidationError("sample_path initial state out of range");
  std::vector<StateIndex> path;
  path.reserve(static_cast<size_t>(length));
  path.push_back(initial_state);
  for (long k = 1; k < length; ++k) path.push_back(chain.sample_next(path.back(), rng));
  return path;
}

StateIndex sample_from(const Eigen::VectorXd& probabilities, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  const int n = static_cast<int>(probabilities.size());
  for (int i = 0; i < n; ++i) {
    acc += probabilities(i);
    if (u < acc) return i;
  }
  for (int i = n - 1; i >= 0; --i)
    if (probabilities(i) > 0.0) return i;
  return n - 1;
}

HittingSumEstimate expected_hitting_sums(const MarkovChain& chain, StateIndex anchor,
                                         const Eigen::MatrixXd& g, long cycles_per_state,
                                         RngStream& rng) {
  const int n = chain.n_states();
  if (g.rows() != n) throw DimensionMismatch("hitting-sum integrand must have one row per state");
  if (anchor < 0 || anchor >= n) throw ValidationError("anchor state out of range");
  if (cycles_per_state < 2) throw ValidationError("need at least two cycles per state");

  const int q = static_cast<int>(g.cols());
  HittingSumEstimate out;
  out.mean = Eigen::MatrixXd::Zero(n, q);
  out.standard_error = Eigen::MatrixXd::Zero(n, q);
  out.mean_return_time = Eigen::VectorXd::Zero(n);
  out.cycles_per_state = cycles_per_state;

  Eigen::RowVectorXd cycle_sum(q);
  for (int start = 0; start < n; ++start) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(q);
    Eigen::RowVectorXd sum_sq = Eigen::RowVectorXd::Zero(q);
    double steps = 0.0;
    for (long c = 0; c < cycles_per_state; ++c) {
      cycle_sum.setZero();
      StateIndex y = start;
      do {
        cycle_sum += g.row(y);
        y = chain.sample_next(y, rng);
        steps += 1.0;
      } while (y != anchor);
      sum += cycle_sum;
      sum_sq += cycle_sum.cwiseProduct(cycle_sum);
    }
    const double m = static_cast<double>(cycles_per_state);
    const Eigen::RowVectorXd mean = sum / m;
    const Eigen::RowVectorXd var =
        ((sum_sq - m * mean.cwiseProduct(mean)) / (m - 1.0)).cwiseMax(0.0);
    out.mean.row(start) = mean;
    out.standard_error.row(start) = (var / m).cwiseSqrt();
    out.mean_return_time(start) = steps / m;
  }
  return out;
}

}  // namespace tdlab
