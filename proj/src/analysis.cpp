#include "lcz/analysis.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "lcz/io.hpp"

namespace lcz::stats {

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete_beta: continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw UsageError("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw UsageError("incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw UsageError("student_t_cdf: dof must be positive");
  if (std::isnan(t)) throw NumericError("student_t_cdf: t is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw UsageError("student_t_quantile: p must lie in (0, 1)");
  double lo = -1.0, hi = 1.0;
  while (student_t_cdf(lo, dof) > p) lo *= 2.0;
  while (student_t_cdf(hi, dof) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::fabs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

OlsFit ols_fit(std::span<const double> xs, std::span<const double> ys, double confidence) {
  if (xs.size() != ys.size()) throw UsageError("ols_fit: xs and ys differ in length");
  if (xs.size() < 3) throw InsufficientData("ols_fit: need at least 3 points, got " + std::to_string(xs.size()));
  if (!(confidence > 0.0 && confidence < 1.0)) throw UsageError("ols_fit: confidence must lie in (0, 1)");
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw NumericError("ols_fit: non-finite input");

  OlsFit f;
  f.n = xs.size();
  const double n = static_cast<double>(f.n);
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < f.n; ++i) {
    xm += xs[i];
    ym += ys[i];
  }
  xm /= n;
  ym /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < f.n; ++i) {
    const double dx = xs[i] - xm;
    const double dy = ys[i] - ym;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw RankDeficient("ols_fit: all xs are equal");

  f.a = sxy / sxx;
  f.b = ym - f.a * xm;
  f.x_mean = xm;
  f.sxx = sxx;
  f.dof = f.n - 2;
  double ss_res = 0.0;
  f.residuals.resize(f.n);
  for (std::size_t i = 0; i < f.n; ++i) {
    f.residuals[i] = ys[i] - (f.a * xs[i] + f.b);
    ss_res += f.residuals[i] * f.residuals[i];
  }
  if (syy == 0.0) {
    f.degenerate_variance = true;
    f.r_squared = 0.0;
  } else {
    f.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }

  const double dof = static_cast<double>(f.dof);
  const double s2 = ss_res / dof;
  f.residual_std = std::sqrt(s2);
  f.se_a = std::sqrt(s2 / sxx);
  f.se_b = std::sqrt(s2 * (1.0 / n + xm * xm / sxx));
  if (f.se_a > 0.0) {
    f.t_a = f.a / f.se_a;
    f.p_a = std::clamp(2.0 * student_t_cdf(-std::fabs(f.t_a), dof), 0.0, 1.0);
  } else {
    // Exact fit: the slope is known without error.
    f.t_a = f.a == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), f.a);
    f.p_a = f.a == 0.0 ? 1.0 : 0.0;
  }
  const double q = student_t_quantile(0.5 + 0.5 * confidence, dof);
  f.ci_a = {f.a - q * f.se_a, f.a + q * f.se_a};
  f.ci_b = {f.b - q * f.se_b, f.b + q * f.se_b};
  return f;
}

Interval fit_band(const OlsFit& fit, double x, double confidence) {
  const double q = student_t_quantile(0.5 + 0.5 * confidence, static_cast<double>(fit.dof));
  const double y = fit.a * x + fit.b;
  const double dx = x - fit.x_mean;
  const double half = q * fit.residual_std * std::sqrt(1.0 / static_cast<double>(fit.n) + dx * dx / fit.sxx);
  return {y - half, y + half};
}

HypothesisDecision hypothesis_report(const OlsFit& fit, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("hypothesis_report: alpha must lie in (0, 1)");
  HypothesisDecision d;
  d.alpha = alpha;
  d.slope = fit.a;
  d.p_two_sided = fit.p_a;
  d.reject_null = fit.p_a < alpha && fit.a < 0.0;
  std::ostringstream s;
  s << "H0: vegetation fraction does not increase as surface temperature decreases.\n"
    << "Test: two-sided t-test on the OLS slope (dof " << fit.dof << "), rejection also requires a < 0.\n"
    << "slope a = " << io::format_real(fit.a) << ", p = " << io::format_real(fit.p_a) << ", alpha = "
    << io::format_real(alpha) << "\n"
    << "decision: " << (d.reject_null ? "reject H0" : "fail to reject H0");
  if (!d.reject_null) {
    if (fit.a >= 0.0) s << " (slope is not negative)";
    else s << " (p >= alpha)";
  }
  s << '\n';
  d.summary = s.str();
  return d;
}

void report_figure_data(std::ostream& out, std::span<const std::pair<double, double>> aggregated, const OlsFit& fit) {
  if (aggregated.size() < 3) throw InsufficientData("report_figure_data: need at least 3 aggregated rows");
  out << "delta_t,mean_v,fit_v,ci_lo,ci_hi\n";
  for (const auto& [dt, v] : aggregated) {
    const auto band = fit_band(fit, dt);
    out << io::format_real(dt) << ',' << io::format_real(v) << ',' << io::format_real(fit.a * dt + fit.b) << ','
        << io::format_real(band.lo) << ',' << io::format_real(band.hi) << '\n';
  }
}

}  // namespace lcz::stats
