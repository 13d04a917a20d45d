#include "tdlab/schedule.hpp"

#include <cmath>
#include <sstream>

#include "tdlab/errors.hpp"

namespace tdlab {

namespace {

constexpr double kEnvelopeSlack = 1e-12;
// Products shorter than this are evaluated factor by factor in psi.
constexpr long kDirectProductLimit = 10'000;

// Neumaier-compensated running sum.
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

}  // namespace

StepSchedule::StepSchedule(Kind kind, double d1, double d2, double d3, long valid_from, long cache_end,
                           std::vector<double> table)
    : kind_(kind),
      d1_(d1),
      d2_(d2),
      d3_(d3),
      valid_from_(valid_from),
      cache_end_(cache_end),
      table_(std::move(table)) {
  if (!(d1_ > 0.0) || !(d2_ > 0.0 && d2_ <= 1.0) || !(d3_ > 0.0)) {
    std::ostringstream msg;
    msg << "envelope constants need d1 > 0, 0 < d2 <= 1, d3 > 0 (got d1=" << d1_ << ", d2=" << d2_
        << ", d3=" << d3_ << ")";
    throw InvalidSchedule(msg.str());
  }
  if (valid_from_ < 0) throw InvalidSchedule("valid_from must be non-negative");
  if (cache_end_ < valid_from_) throw InvalidSchedule("schedule horizon ends before valid_from");
  validate();
  build_prefix_tables();
}

StepSchedule StepSchedule::harmonic(double d1, Options options) {
  return harmonic(d1, 1.0, d1, options);
}

StepSchedule StepSchedule::harmonic(double d1, double d2, double d3, Options options) {
  return StepSchedule(Kind::kHarmonic, d1, d2, d3, options.valid_from, options.check_horizon, {});
}

StepSchedule StepSchedule::polynomial(double d3, double d2, double d1, Options options) {
  return StepSchedule(Kind::kPolynomial, d1, d2, d3, options.valid_from, options.check_horizon, {});
}

StepSchedule StepSchedule::table(std::vector<double> values, double d1, double d2, double d3,
                                 long valid_from) {
  if (values.empty()) throw InvalidSchedule("step-size table is empty");
  const long end = static_cast<long>(values.size()) - 1;
  return StepSchedule(Kind::kTable, d1, d2, d3, valid_from, end, std::move(values));
}

double StepSchedule::a(long n) const {
  if (n < 0) throw InvalidSchedule("step index must be non-negative");
  switch (kind_) {
    case Kind::kHarmonic:
      return d1_ / static_cast<double>(n + 1);
    case Kind::kPolynomial:
      return d3_ / std::pow(static_cast<double>(n + 1), d2_);
    case Kind::kTable:
      if (n >= static_cast<long>(table_.size())) {
        std::ostringstream msg;
        msg << "step index " << n << " is past the end of the step-size table (" << table_.size()
            << " entries)";
        throw InvalidSchedule(msg.str());
      }
      return table_[static_cast<size_t>(n)];
  }
  return 0.0;
}

void StepSchedule::validate() const {
  for (long n = 0; n < valid_from_; ++n) {
    const double v = a(n);
    if (!(v > 0.0) || !std::isfinite(v)) {
      std::ostringstream msg;
      msg << "a(" << n << ") = " << v << " is not a positive step size";
      throw InvalidSchedule(msg.str());
    }
  }
  double previous = 0.0;
  for (long n = valid_from_; n <= cache_end_; ++n) {
    const double v = a(n);
    const double np1 = static_cast<double>(n + 1);
    std::ostringstream msg;
    if (!(v > 0.0) || !std::isfinite(v)) {
      msg << "a(" << n << ") = " << v << " is not a positive step size";
    } else if (!(v < 1.0)) {
      msg << "a(" << n << ") = " << v << " violates a(n) < 1";
    } else if (n > valid_from_ && v > previous) {
      msg << "step sizes must be non-increasing, a(" << n << ") > a(" << n - 1 << ")";
    } else if (d1_ / np1 > v * (1.0 + kEnvelopeSlack)) {
      msg << "a(" << n << ") = " << v << " is below the envelope d1/(n+1) = " << d1_ / np1;
    } else if (v > d3_ / std::pow(np1, d2_) * (1.0 + kEnvelopeSlack)) {
      msg << "a(" << n << ") = " << v << " is above the envelope d3/(n+1)^d2 = " << d3_ / std::pow(np1, d2_);
    }
    if (!msg.str().empty()) throw InvalidSchedule(msg.str());
    previous = v;
  }
}

void StepSchedule::build_prefix_tables() {
  const long count = cache_end_ + 2;
  prefix_a_.assign(static_cast<size_t>(count), 0.0);
  CompensatedSum sum;
  for (long n = 0; n + 1 < count; ++n) {
    sum.add(a(n));
    prefix_a_[static_cast<size_t>(n + 1)] = sum.value();
  }
  prefix_log1m_.assign(static_cast<size_t>(count - valid_from_), 0.0);
  CompensatedSum logs;
  for (long n = valid_from_; n + 1 < count; ++n) {
    logs.add(std::log1p(-a(n)));
    prefix_log1m_[static_cast<size_t>(n + 1 - valid_from_)] = logs.value();
  }
}

double StepSchedule::prefix_a(long n) const {
  const long cached = static_cast<long>(prefix_a_.size()) - 1;
  if (n <= cached) return prefix_a_[static_cast<size_t>(n)];
  CompensatedSum sum;
  sum.add(prefix_a_.back());
  for (long i = cached; i < n; ++i) sum.add(a(i));
  return sum.value();
}

double StepSchedule::prefix_log1m(long n) const {
  const long cached = valid_from_ + static_cast<long>(prefix_log1m_.size()) - 1;
  if (n <= cached) return prefix_log1m_[static_cast<size_t>(n - valid_from_)];
  CompensatedSum sum;
  sum.add(prefix_log1m_.back());
  for (long i = cached; i < n; ++i) sum.add(std::log1p(-a(i)));
  return sum.value();
}

double StepSchedule::b(long k, long n) const {
  if (k < 0) throw InvalidSchedule("b(k, n) needs k >= 0");
  if (n < k) return 0.0;
  return prefix_a(n + 1) - prefix_a(k);
}

double StepSchedule::chi(long n, long m) const {
  if (m < 0) throw InvalidSchedule("chi(n, m) needs m >= 0");
  if (n < m) return 1.0;
  double head = 1.0;
  long start = m;
  // Factors before valid_from may be non-positive; multiply them directly.
  for (; start < valid_from_ && start <= n; ++start) head *= 1.0 - a(start);
  if (start > n) return head;
  return head * std::exp(prefix_log1m(n + 1) - prefix_log1m(start));
}

double StepSchedule::psi(long n, long m, double alpha) const {
  if (m < 0) throw InvalidSchedule("psi(n, m) needs m >= 0");
  if (n <= m) return 1.0;
  const double rate = 1.0 - alpha;
  if (n - m <= kDirectProductLimit) {
    double product = 1.0;
    for (long k = m; k < n; ++k) product *= 1.0 - rate * a(k);
    return product;
  }
  double head = 1.0;
  long k = m;
  for (; k < valid_from_ && k < n; ++k) head *= 1.0 - rate * a(k);
  CompensatedSum logs;
  for (; k < n; ++k) logs.add(std::log1p(-rate * a(k)));
  return head * std::exp(logs.value());
}

double StepSchedule::beta(long k, long n, double d1, double d2) {
  if (k < 1 || n < 1) throw InvalidSchedule("beta(k, n) needs k, n >= 1");
  const double kk = static_cast<double>(k);
  const double nn = static_cast<double>(n);
  if (d1 <= d2) return 1.0 / (std::pow(kk, d2 - d1) * std::pow(nn, d1));
  return 1.0 / std::pow(nn, d2);
}

}  // namespace tdlab
