#include "tdlab/bound_calculus.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <sstream>

#include "tdlab/errors.hpp"

namespace tdlab {

namespace {

constexpr long kMaxSeriesTerms = 10'000'000;
constexpr double kRelativeCutoff = 1e-16;

class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

bool feasible_at(const ConstantsBundle& k, const StepSchedule& schedule, long n) {
  return k.alpha + schedule.a(n) * k.c1 < 1.0;
}

// Per-step tail terms have the form 2d exp(-c m^p); this returns (c, p).
struct TailShape {
  double c;
  double p;
  bool quadratic;
  double branch_C;
};

TailShape tail_shape(const BoundQuery& q, const ConstantsBundle& k, const StepSchedule& schedule) {
  TailShape shape{};
  shape.branch_C = k.tail_branch_C(schedule.a(q.n0));
  shape.quadratic = q.delta <= shape.branch_C;
  const double rate = q.D_const * (shape.quadratic ? q.delta * q.delta : q.delta);
  const double d1 = schedule.d1();
  const double d2 = schedule.d2();
  if (d1 <= d2) {
    shape.c = rate * std::pow(static_cast<double>(q.n0), d2 - d1);
    shape.p = d1;
  } else {
    shape.c = rate;
    shape.p = d2;
  }
  return shape;
}

// Upper bound on sum_{m > M} 2d exp(-c m^p) by the integral from M to infinity,
// 2d Gamma(1/p, c M^p) / (p c^(1/p)).
double integral_remainder(double c, double p, long M, int d) {
  const double a = 1.0 / p;
  const double x = c * std::pow(static_cast<double>(M), p);
  const double q = boost::math::gamma_q(a, x);
  if (q == 0.0) return 0.0;
  const double log_scale = std::lgamma(a) - std::log(p) - std::log(c) / p;
  return 2.0 * d * q * std::exp(log_scale);
}

}  // namespace

N0Check check_n0(const ConstantsBundle& constants, const StepSchedule& schedule, long n0, long search_limit) {
  N0Check out;
  out.margin = 1.0 - constants.alpha - schedule.a(n0) * constants.c1;
  out.feasible = out.margin > 0.0;

  long limit = search_limit;
  if (schedule.kind() == StepSchedule::Kind::kTable) limit = std::min(limit, schedule.cache_horizon());
  const long vf = schedule.valid_from();
  for (long n = 0; n <= std::min(vf, limit); ++n)
    if (feasible_at(constants, schedule, n)) {
      out.smallest_feasible_n0 = n;
      return out;
    }
  // Monotone from valid_from on: doubling, then bisection.
  if (vf >= limit) return out;
  long lo = vf;
  long step = 1;
  long hi;
  for (;;) {
    hi = std::min(limit, lo + step);
    if (feasible_at(constants, schedule, hi)) break;
    if (hi == limit) return out;
    lo = hi;
    step *= 2;
  }
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (feasible_at(constants, schedule, mid))
      hi = mid;
    else
      lo = mid;
  }
  out.smallest_feasible_n0 = hi;
  return out;
}

void validate_query(const BoundQuery& q, const ConstantsBundle& constants, const StepSchedule& schedule) {
  std::ostringstream msg;
  if (!(q.epsilon >= 0.0 && q.epsilon <= 1.0))
    msg << "epsilon must lie in [0, 1] (got " << q.epsilon << ")";
  else if (!(q.delta > 0.0 && q.delta <= 1.0))
    msg << "delta must lie in (0, 1] (got " << q.delta << ")";
  else if (!(q.p_init >= 0.0 && q.p_init <= 1.0))
    msg << "p_init must lie in [0, 1] (got " << q.p_init << ")";
  else if (q.n0 < 1)
    msg << "n0 must be at least 1 (got " << q.n0 << ")";
  else if (q.horizon != kInfiniteHorizon && q.horizon < q.n0)
    msg << "horizon " << q.horizon << " is before n0 = " << q.n0;
  else if (!std::isfinite(q.D_const))
    msg << "D must be finite";
  if (!msg.str().empty()) throw InfeasibleQuery(msg.str());

  const N0Check check = check_n0(constants, schedule, q.n0);
  if (!check.feasible) {
    msg << "n0 = " << q.n0 << " violates alpha + a(n0) c1 < 1 (margin " << check.margin << ")";
    if (check.smallest_feasible_n0 >= 0) msg << "; smallest feasible n0 is " << check.smallest_feasible_n0;
    throw InfeasibleQuery(msg.str());
  }
}

double floor_term(const BoundQuery& q, const ConstantsBundle& k, const StepSchedule& schedule) {
  const double a0 = schedule.a(q.n0);
  return (a0 * (k.c2 + k.c1 * q.epsilon) + q.delta) / (1.0 - k.alpha - a0 * k.c1);
}

std::vector<double> radius_curve(const BoundQuery& q, const ConstantsBundle& k, const StepSchedule& schedule,
                                 long m_end) {
  const double floor = floor_term(q, k, schedule);
  std::vector<double> out;
  if (m_end < q.n0) return out;
  out.reserve(static_cast<size_t>(m_end - q.n0 + 1));
  const double rate = 1.0 - k.alpha;
  CompensatedSum b;  // b_{n0}(m-1)
  for (long m = q.n0; m <= m_end; ++m) {
    if (m > q.n0) b.add(schedule.a(m - 1));
    out.push_back(std::exp(-rate * b.value()) * q.epsilon + floor);
  }
  return out;
}

double martingale_tail(double delta, double C, double D_const, double omega, int d) {
  const double exponent = delta <= C ? D_const * delta * delta / omega : D_const * delta / omega;
  return 2.0 * d * std::exp(-exponent);
}

TailSum tail_probability(const BoundQuery& q, const ConstantsBundle& k, const StepSchedule& schedule) {
  const TailShape shape = tail_shape(q, k, schedule);
  const int d = k.dim;
  TailSum out;
  out.quadratic_branch = shape.quadratic;
  out.branch_C = shape.branch_C;
  auto term = [&](long m) { return 2.0 * d * std::exp(-shape.c * std::pow(static_cast<double>(m), shape.p)); };

  CompensatedSum sum;
  if (q.horizon != kInfiniteHorizon) {
    for (long m = q.n0 + 1; m <= q.horizon; ++m) {
      const double t = term(m);
      ++out.terms_summed;
      if (t == 0.0 && shape.c > 0.0) break;  // decreasing terms, the rest are zero too
      sum.add(t);
    }
    out.sum = sum.value();
    return out;
  }

  if (!(shape.c > 0.0) || !(shape.p > 0.0) || !std::isfinite(shape.c)) {
    std::ostringstream msg;
    msg << "tail series does not decay (exponent coefficient " << shape.c << ", power " << shape.p
        << "); D must be positive";
    throw SeriesDivergence(msg.str());
  }
  long m = q.n0;
  while (out.terms_summed < kMaxSeriesTerms) {
    ++m;
    const double t = term(m);
    sum.add(t);
    ++out.terms_summed;
    if (t == 0.0 || t <= kRelativeCutoff * sum.value()) break;
  }
  out.remainder_bound = integral_remainder(shape.c, shape.p, m, d);
  if (!std::isfinite(out.remainder_bound)) throw SeriesDivergence("tail series remainder is not finite");
  sum.add(out.remainder_bound);
  out.sum = sum.value();
  return out;
}

BoundReport evaluate_bound(const BoundQuery& q, const ConstantsBundle& k, const StepSchedule& schedule,
                           long curve_end_if_infinite) {
  validate_query(q, k, schedule);
  BoundReport r;
  r.query = q;
  r.alpha = k.alpha;
  r.c1 = k.c1;
  r.c2 = k.c2;
  r.margin = 1.0 - k.alpha - schedule.a(q.n0) * k.c1;
  r.floor_term = floor_term(q, k, schedule);
  r.curve_end = q.horizon == kInfiniteHorizon ? std::max(q.n0, curve_end_if_infinite) : q.horizon;
  r.radius = radius_curve(q, k, schedule, r.curve_end);
  const TailShape shape = tail_shape(q, k, schedule);
  r.tail_terms.reserve(static_cast<size_t>(r.curve_end - q.n0));
  for (long m = q.n0 + 1; m <= r.curve_end; ++m)
    r.tail_terms.push_back(2.0 * k.dim * std::exp(-shape.c * std::pow(static_cast<double>(m), shape.p)));
  r.tail = tail_probability(q, k, schedule);
  r.prob_lower_bound = 1.0 - r.tail.sum - q.p_init;
  r.vacuous = r.prob_lower_bound <= 0.0;
  return r;
}

CorollaryRate corollary_rate(long n0, long m, double eps1, double eps2) {
  if (n0 < 2 || m < n0) throw ValidationError("corollary_rate needs 2 <= n0 <= m");
  if (!(eps1 > 0.0 && eps1 < 1.0) || !(eps2 > 0.0)) throw ValidationError("corollary_rate needs 0 < eps1 < 1, eps2 > 0");
  const double n = static_cast<double>(n0);
  CorollaryRate out;
  out.initial_term = std::sqrt(std::log(1.0 / eps1) / n);
  out.noise_term = std::sqrt(std::log(n) / n) / std::sqrt(eps2) * (n / static_cast<double>(m) + 1.0 / n);
  out.total = out.initial_term + out.noise_term;
  return out;
}

bool corollary_regime(double alpha, const StepSchedule& schedule) {
  return schedule.kind() == StepSchedule::Kind::kHarmonic && (1.0 - alpha) * schedule.d1() > 1.0;
}

}  // namespace tdlab
