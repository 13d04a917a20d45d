#pragma once

#include <string>
#include <vector>

#include "tdlab/analytic.hpp"
#include "tdlab/schedule.hpp"

namespace tdlab {

/// Horizon value meaning "all m >= n0".
inline constexpr long kInfiniteHorizon = -1;

struct N0Check {
  bool feasible = false;
  double margin = 0.0;               // 1 - alpha - a(n0) c1
  long smallest_feasible_n0 = -1;    // -1 if none exists within the search range
};

/// Tests alpha + a(n0) c1 < 1 and locates the smallest n0 satisfying it.
/// The search assumes a(n) is non-increasing from the schedule's valid_from
/// on and is capped at `search_limit` (and at the table end for tables).
N0Check check_n0(const ConstantsBundle& constants, const StepSchedule& schedule, long n0,
                 long search_limit = 1L << 40);

struct BoundQuery {
  double epsilon = 0.0;
  double delta = 0.0;
  long n0 = 1;
  long horizon = kInfiniteHorizon;
  double D_const = 1.0;
  double p_init = 0.0;
  /// Where p_init came from: "empirical", "analytic" or "user".
  std::string p_init_source = "user";
};

/// Throws InfeasibleQuery unless 0 <= epsilon <= 1, 0 < delta <= 1,
/// 0 <= p_init <= 1, 1 <= n0 <= horizon (when finite) and the n0 condition
/// holds. epsilon = 0 is accepted as the degenerate zero-budget case.
void validate_query(const BoundQuery& query, const ConstantsBundle& constants, const StepSchedule& schedule);

/// (a(n0)(c2 + c1 eps) + delta) / (1 - alpha - a(n0) c1).
double floor_term(const BoundQuery& query, const ConstantsBundle& constants, const StepSchedule& schedule);

/// radius(m) = exp(-(1-alpha) b_{n0}(m-1)) eps + floor_term for m = n0..m_end.
/// Element j is radius(n0 + j).
std::vector<double> radius_curve(const BoundQuery& query, const ConstantsBundle& constants,
                                 const StepSchedule& schedule, long m_end);

/// Per-step bound 2d exp(-D delta^2/omega) when delta <= C, else
/// 2d exp(-D delta/omega). Equality uses the quadratic branch.
double martingale_tail(double delta, double C, double D_const, double omega, int d);

struct TailSum {
  double sum = 0.0;
  bool quadratic_branch = true;      // delta <= C
  double branch_C = 0.0;
  long terms_summed = 0;
  /// Certified upper bound on the part of an infinite series not summed
  /// term by term; already included in `sum`.
  double remainder_bound = 0.0;
};

/// Sum of the per-step tail bounds for m = n0+1 .. horizon (or to infinity).
/// Throws SeriesDivergence when an infinite series cannot decay.
TailSum tail_probability(const BoundQuery& query, const ConstantsBundle& constants, const StepSchedule& schedule);

struct BoundReport {
  BoundQuery query;
  double alpha = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double margin = 0.0;
  double floor_term = 0.0;
  long curve_end = 0;
  std::vector<double> radius;        // m = n0 .. curve_end
  std::vector<double> tail_terms;    // m = n0+1 .. curve_end
  TailSum tail;
  double prob_lower_bound = 0.0;     // 1 - tail - p_init, may be negative
  bool vacuous = false;              // prob_lower_bound <= 0
};

/// Full evaluation. The radius curve and per-step terms run to the horizon,
/// or to `curve_end_if_infinite` for an infinite horizon.
BoundReport evaluate_bound(const BoundQuery& query, const ConstantsBundle& constants,
                           const StepSchedule& schedule, long curve_end_if_infinite = 10'000);

/// Shape of the rate for a(n) = d1/(n+1) with unit constants:
/// initial_term = sqrt(log(1/eps1)/n0),
/// noise_term = sqrt(log(n0)/n0) / sqrt(eps2) * (n0/m + 1/n0).
struct CorollaryRate {
  double initial_term = 0.0;
  double noise_term = 0.0;
  double total = 0.0;
};

CorollaryRate corollary_rate(long n0, long m, double eps1, double eps2);

/// Whether (1 - alpha) d1 > 1 for a harmonic schedule, the regime where the
/// rate above applies.
bool corollary_regime(double alpha, const StepSchedule& schedule);

}  // namespace tdlab
