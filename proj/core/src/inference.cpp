#include "hetstream/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hetstream/error.hpp"

namespace hetstream {

namespace {

constexpr int kMaxFractionTerms = 10000;
constexpr double kFractionEps = 1e-16;
constexpr double kTiny = 1e-300;

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxFractionTerms; ++m) {
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
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kFractionEps) return h;
  }
  throw NonConvergence("incomplete beta: continued fraction did not converge for a=" +
                       std::to_string(a) + " b=" + std::to_string(b));
}

void check_degrees(std::int64_t d1, std::int64_t d2) {
  if (d1 < 1 || d2 < 1) {
    throw InvalidDegrees("F distribution needs positive degrees of freedom, got (" +
                         std::to_string(d1) + ", " + std::to_string(d2) + ")");
  }
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidDegrees("incomplete beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double f_cdf(double x, std::int64_t d1, std::int64_t d2) {
  check_degrees(d1, d2);
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double a = 0.5 * static_cast<double>(d1);
  const double b = 0.5 * static_cast<double>(d2);
  const double u = static_cast<double>(d1) * x;
  return regularized_incomplete_beta(a, b, u / (u + static_cast<double>(d2)));
}

double f_sf(double x, std::int64_t d1, std::int64_t d2) {
  check_degrees(d1, d2);
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double a = 0.5 * static_cast<double>(d1);
  const double b = 0.5 * static_cast<double>(d2);
  const double dd = static_cast<double>(d2);
  return regularized_incomplete_beta(b, a, dd / (dd + static_cast<double>(d1) * x));
}

double f_pdf(double x, std::int64_t d1, std::int64_t d2) {
  check_degrees(d1, d2);
  if (x < 0.0) return 0.0;
  const double a = 0.5 * static_cast<double>(d1);
  const double b = 0.5 * static_cast<double>(d2);
  if (x == 0.0) {
    if (d1 == 1) return std::numeric_limits<double>::infinity();
    return d1 == 2 ? 1.0 : 0.0;
  }
  const double n1 = static_cast<double>(d1);
  const double n2 = static_cast<double>(d2);
  const double log_pdf = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(n1 / n2) + (a - 1.0) * std::log(x) -
                         (a + b) * std::log1p(n1 * x / n2);
  return std::exp(log_pdf);
}

double f_quantile(double p, std::int64_t d1, std::int64_t d2) {
  check_degrees(d1, d2);
  if (!(p > 0.0 && p < 1.0)) throw InvalidDegrees("f_quantile: p must lie in (0, 1)");

  double lo = 0.0;
  double hi = 1.0;
  int grow = 0;
  while (f_cdf(hi, d1, d2) < p) {
    lo = hi;
    hi *= 2.0;
    if (++grow > 2000) throw NonConvergence("f_quantile: could not bracket the quantile");
  }

  // Newton steps kept inside the bracket, bisection otherwise.
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double err = f_cdf(x, d1, d2) - p;
    if (err == 0.0) return x;
    if (err < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return 0.5 * (lo + hi);
    const double dens = f_pdf(x, d1, d2);
    double next = (dens > 0.0 && std::isfinite(dens)) ? x - err / dens : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  const double mid = 0.5 * (lo + hi);
  if (std::fabs(f_cdf(mid, d1, d2) - p) <= 1e-12) return mid;
  throw NonConvergence("f_quantile: no convergence for p=" + std::to_string(p));
}

void finalize_report(TestReport& report) {
  if (report.degenerate) {
    report.p_value = std::isinf(report.f_value) ? 0.0 : 1.0;
    report.reject = std::isinf(report.f_value);
    return;
  }
  report.p_value = f_sf(report.f_value, report.df1, report.df2);
  report.reject = report.f_value > f_quantile(1.0 - report.alpha, report.df1, report.df2);
}

TestReport f_statistic(const AccumulatorState& state, const TestOptions& options) {
  if (state.phase() != Phase::updated) {
    throw PhaseMismatch("f_statistic: the θ = 0 test needs the stream in the updated phase");
  }
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw InvalidConfig("f_statistic: alpha must lie in (0, 1)");
  }
  const auto& schema = state.schema();
  const std::int64_t n = state.n_total();
  const std::int64_t df2 =
      options.df2_mode == Df2Mode::n_minus_q ? n - schema.q : n - schema.p - schema.q;
  if (df2 < 1) {
    throw InsufficientData("f_statistic: " + std::to_string(n) +
                           " observations leave no residual degrees of freedom");
  }

  const EstimateReport est = state.estimate();
  const Vec& theta = *est.theta;
  const Mat factor = state.numerator_factor();
  const double sse = state.update_sse();

  TestReport rep;
  rep.df1 = schema.q;
  rep.df2 = df2;
  rep.alpha = options.alpha;
  rep.case_label = state.case_label();
  rep.numerator = theta.dot(factor * theta) / static_cast<double>(schema.q);
  rep.denominator = sse / static_cast<double>(df2);

  const double scale = state.weighted_yty();
  if (sse <= options.sse_tolerance * scale) {
    rep.degenerate = true;
    rep.f_value = rep.numerator * schema.q > options.sse_tolerance * scale
                      ? std::numeric_limits<double>::infinity()
                      : 0.0;
  } else {
    rep.f_value = std::max(rep.numerator, 0.0) / rep.denominator;
  }
  finalize_report(rep);
  return rep;
}

TestReport test_theta_zero(const AccumulatorState& state, double alpha, Df2Mode df2_mode) {
  TestOptions opts;
  opts.alpha = alpha;
  opts.df2_mode = df2_mode;
  return f_statistic(state, opts);
}

KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InsufficientData("ks_test: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double root = std::sqrt(n);
  const double lambda = (root + 0.12 + 0.11 / root) * d;
  double q = 0.0;
  if (lambda < 0.2) {
    q = 1.0;
  } else {
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      q += term;
      if (std::fabs(term) < 1e-16) break;
      sign = -sign;
    }
    q = std::clamp(2.0 * q, 0.0, 1.0);
  }
  return {d, q};
}

}  // namespace hetstream
