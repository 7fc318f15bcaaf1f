#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lcz/error.hpp"

namespace lcz::stats {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double dof);
/// Inverse of student_t_cdf for p in (0, 1).
double student_t_quantile(double p, double dof);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
};

class InsufficientData : public UsageError {
 public:
  using UsageError::UsageError;
};

class RankDeficient : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Simple linear regression y = a·x + b with 95% intervals.
struct OlsFit {
  std::size_t n = 0;
  double a = 0.0;  // slope
  double b = 0.0;  // intercept
  double r_squared = 0.0;
  /// True when ys have zero variance; r_squared is then reported as 0.
  bool degenerate_variance = false;
  double se_a = 0.0;
  double se_b = 0.0;
  Interval ci_a;
  Interval ci_b;
  double t_a = 0.0;
  double p_a = 1.0;  // two-sided
  std::size_t dof = 0;
  double x_mean = 0.0;
  double sxx = 0.0;
  double residual_std = 0.0;
  std::vector<double> residuals;
};

/// Closed-form least squares. Throws InsufficientData for fewer than 3
/// points and RankDeficient when all xs are equal.
OlsFit ols_fit(std::span<const double> xs, std::span<const double> ys, double confidence = 0.95);

/// Confidence band of the fitted mean at x.
Interval fit_band(const OlsFit& fit, double x, double confidence = 0.95);

struct HypothesisDecision {
  double alpha = 0.05;
  double slope = 0.0;
  double p_two_sided = 1.0;
  bool reject_null = false;
  std::string summary;
};

/// Rejects "vegetation does not increase as temperature decreases" iff
/// p_a < alpha and a < 0. The p-value is two-sided; pairing it with the
/// sign condition is the documented convention.
HypothesisDecision hypothesis_report(const OlsFit& fit, double alpha);

/// CSV "delta_t,mean_v,fit_v,ci_lo,ci_hi", one row per aggregated point.
void report_figure_data(std::ostream& out, std::span<const std::pair<double, double>> aggregated, const OlsFit& fit);

}  // namespace lcz::stats
