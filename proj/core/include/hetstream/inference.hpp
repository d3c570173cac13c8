#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hetstream/stream_engine.hpp"

namespace hetstream {

// Denominator degrees of freedom of the θ = 0 test. The default is N − q;
// N − p − q is available for sensitivity checks.
enum class Df2Mode { n_minus_q, n_minus_p_minus_q };

struct TestOptions {
  double alpha = 0.05;
  Df2Mode df2_mode = Df2Mode::n_minus_q;
  // SSE at or below this fraction of Σ w²yᵀy counts as zero.
  double sse_tolerance = 1e-10;
};

struct TestReport {
  double f_value = 0.0;
  std::int64_t df1 = 0;
  std::int64_t df2 = 0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
  // Zero residual sum of squares: f_value is +inf (or 0 with a zero
  // numerator) and p_value is not meaningful.
  bool degenerate = false;
  CaseLabel case_label = CaseLabel::correlated;
  double numerator = 0.0;
  double denominator = 0.0;
};

// I_x(a, b) by continued fraction with the usual symmetry switch.
double regularized_incomplete_beta(double a, double b, double x);

// F distribution. Throw InvalidDegrees for non-positive degrees.
double f_cdf(double x, std::int64_t d1, std::int64_t d2);
// 1 − f_cdf(x), evaluated without cancellation.
double f_sf(double x, std::int64_t d1, std::int64_t d2);
double f_pdf(double x, std::int64_t d1, std::int64_t d2);
// Throws NonConvergence when bracketing or refinement fails.
double f_quantile(double p, std::int64_t d1, std::int64_t d2);

// Online F statistic for H: θ = 0 read from the accumulator (F^c; equals
// the uncorrelated-case statistic when B̂ = 0). Requires the updated phase.
TestReport f_statistic(const AccumulatorState& state, const TestOptions& options = {});

// f_statistic plus the decision f > F_{q,df2}(1 − α).
TestReport test_theta_zero(const AccumulatorState& state, double alpha,
                           Df2Mode df2_mode = Df2Mode::n_minus_q);

// Fills df, p-value and decision of a report whose f_value, numerator and
// denominator are set.
void finalize_report(TestReport& report);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-sample Kolmogorov–Smirnov test against a continuous CDF (asymptotic
// Kolmogorov distribution with the Stephens small-sample correction).
KsResult ks_test(std::vector<double> sample, const std::function<double(double)>& cdf);

}  // namespace hetstream
