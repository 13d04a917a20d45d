#pragma once

#include <vector>

namespace tdlab {

/// Step-size sequence a(n) together with the envelope constants (d1, d2, d3)
/// that bound it: d1/(n+1) <= a(n) <= d3/(n+1)^d2.
///
/// The assumptions (a(n) < 1, non-increasing, envelope) are validated from
/// index `valid_from` on. Before that index the sequence only has to be
/// positive, which is what allows harmonic schedules with d1 > 1.
///
/// Partial sums b and the products chi are served from prefix tables built at
/// construction (compensated summation, log space for the products) up to the
/// cache horizon; queries past it are completed by direct summation.
class StepSchedule {
 public:
  enum class Kind { kPolynomial, kHarmonic, kTable };

  struct Options {
    long valid_from = 0;
    long check_horizon = 100'000;
  };

  /// a(n) = d1/(n+1). Envelope defaults to d2 = 1, d3 = d1.
  static StepSchedule harmonic(double d1, Options options);
  static StepSchedule harmonic(double d1, double d2, double d3, Options options);
  /// a(n) = d3/(n+1)^d2 with lower envelope constant d1 (d1 <= d3 needed).
  static StepSchedule polynomial(double d3, double d2, double d1, Options options);
  /// Tabulated a(0..L-1); evaluation past the table throws InvalidSchedule.
  static StepSchedule table(std::vector<double> values, double d1, double d2, double d3,
                            long valid_from = 0);

  Kind kind() const { return kind_; }
  double d1() const { return d1_; }
  double d2() const { return d2_; }
  double d3() const { return d3_; }
  long valid_from() const { return valid_from_; }
  /// Last index covered by validation and the prefix tables.
  long cache_horizon() const { return cache_end_; }

  double a(long n) const;

  /// sum_{m=k}^{n} a(m); zero when n < k.
  double b(long k, long n) const;

  /// prod_{k=m}^{n} (1 - a(k)) if n >= m, else 1.
  double chi(long n, long m) const;

  /// prod_{k=m}^{n-1} (1 - (1 - alpha) a(k)) if n > m, else 1.
  double psi(long n, long m, double alpha) const;

  /// 1/(k^(d2-d1) n^d1) when d1 <= d2, else 1/n^d2. Requires k, n >= 1.
  static double beta(long k, long n, double d1, double d2);
  double beta(long k, long n) const { return beta(k, n, d1_, d2_); }

 private:
  StepSchedule(Kind kind, double d1, double d2, double d3, long valid_from, long cache_end,
               std::vector<double> table);

  void validate() const;
  void build_prefix_tables();
  double prefix_a(long n) const;        // sum_{i < n} a(i)
  double prefix_log1m(long n) const;    // sum_{valid_from <= i < n} log(1 - a(i))

  Kind kind_;
  double d1_;
  double d2_;
  double d3_;
  long valid_from_;
  long cache_end_;
  std::vector<double> table_;
  std::vector<double> prefix_a_;       // size cache_end_ + 2
  std::vector<double> prefix_log1m_;   // indexed from valid_from_
};

}  // namespace tdlab
