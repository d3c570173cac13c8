#include "hetstream/baselines.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "hetstream/error.hpp"

namespace hetstream {

const char* to_string(BaselineKind kind) { return kind == BaselineKind::nue ? "NUE" : "AVE"; }

namespace {

StreamSchema prepared(StreamSchema schema) {
  schema.validate();
  if (schema.names.empty()) schema = StreamSchema::with_default_names(schema.p, schema.q, schema.r);
  return schema;
}

void check_order(Phase current, const BatchStats& stats, const char* who) {
  if (static_cast<int>(stats.phase()) < static_cast<int>(current)) {
    throw PhaseMismatch(std::string(who) + ": batch observes " + to_string(stats.phase()) +
                        " covariates after the stream reached " + to_string(current));
  }
}

void split(EstimateReport& rep, const Vec& eta, const StreamSchema& s, Phase phase) {
  rep.phase = phase;
  rep.beta = eta.head(s.p);
  if (phase != Phase::initial) rep.theta = eta.segment(s.p, s.q);
  if (phase == Phase::twice_updated) rep.gamma = eta.tail(s.r);
}

}  // namespace

NueEstimator::NueEstimator(StreamSchema schema, double tolerance)
    : schema_(prepared(std::move(schema))), tolerance_(tolerance) {
  segment_ = BatchStats::zero(schema_, Phase::initial);
}

void NueEstimator::ingest(const BatchStats& stats) {
  check_order(segment_.phase(), stats, "NUE ingest");
  if (!stats.phase_matches_schema(schema_)) {
    throw SchemaMismatch("NUE ingest: batch dimensions do not match the schema");
  }
  if (stats.phase() != segment_.phase()) {
    segment_ = BatchStats::zero(schema_, stats.phase());
    segment_batches_ = 0;
  }
  segment_ += stats;
  ++batches_;
  ++segment_batches_;
}

EstimateReport NueEstimator::estimate() const {
  if (segment_.n() == 0) throw InsufficientData("NUE: no observations in the current segment");
  const Vec eta = linalg::solve_spd(segment_.gram(), segment_.cross(), tolerance_);
  EstimateReport rep;
  split(rep, eta, schema_, segment_.phase());
  rep.n_total = segment_.n();
  rep.m_post = segment_.phase() == Phase::initial ? 0 : segment_.n();
  rep.rho_hat = 1.0;
  const int d = segment_.dim();
  if (segment_.n() > d) {
    const double sse = std::max(segment_.yty() - segment_.cross().dot(eta), 0.0);
    rep.cov_plugin = sse / static_cast<double>(segment_.n() - d) *
                     linalg::inverse_spd(segment_.gram(), tolerance_);
  }
  return rep;
}

TestReport NueEstimator::test_theta_zero(double alpha) const {
  if (segment_.phase() != Phase::updated) {
    throw PhaseMismatch("NUE test: θ = 0 is tested inside the first-update segment");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfig("NUE test: alpha must lie in (0, 1)");
  const int p = schema_.p;
  const int q = schema_.q;
  const std::int64_t df2 = segment_.n() - p - q;
  if (df2 < 1) {
    throw InsufficientData("NUE test: " + std::to_string(segment_.n()) +
                           " observations leave no residual degrees of freedom");
  }
  const Vec full = linalg::solve_spd(segment_.gram(), segment_.cross(), tolerance_);
  const Vec restricted = linalg::solve_spd(segment_.xtx(), segment_.xty(), tolerance_);
  const double sse_full = std::max(segment_.yty() - segment_.cross().dot(full), 0.0);
  const double sse_restricted = std::max(segment_.yty() - segment_.xty().dot(restricted), 0.0);

  TestReport rep;
  rep.df1 = q;
  rep.df2 = df2;
  rep.alpha = alpha;
  rep.case_label = CaseLabel::correlated;
  rep.numerator = std::max(sse_restricted - sse_full, 0.0) / q;
  rep.denominator = sse_full / static_cast<double>(df2);
  const double tol = 1e-10 * segment_.yty();
  if (sse_full <= tol) {
    rep.degenerate = true;
    rep.f_value = rep.numerator * q > tol ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    rep.f_value = rep.numerator / rep.denominator;
  }
  finalize_report(rep);
  return rep;
}

AveEstimator::AveEstimator(StreamSchema schema, double tolerance)
    : schema_(prepared(std::move(schema))), tolerance_(tolerance) {}

void AveEstimator::ingest(const BatchStats& stats) {
  check_order(phase_, stats, "AVE ingest");
  if (!stats.phase_matches_schema(schema_)) {
    throw SchemaMismatch("AVE ingest: batch dimensions do not match the schema");
  }
  const int index = batches_ + 1;
  Vec eta;
  try {
    if (stats.n() < stats.dim()) throw SingularMatrix("too few rows");
    eta = linalg::solve_spd(stats.gram(), stats.cross(), tolerance_);
  } catch (const SingularMatrix&) {
    throw SingularBatch("AVE: batch " + std::to_string(index) + " (" + std::to_string(stats.n()) +
                        " rows, " + std::to_string(stats.dim()) +
                        " covariates) has a singular design");
  }
  if (stats.phase() != phase_ || count_ == 0) {
    phase_ = stats.phase();
    sum_ = Vec::Zero(stats.dim());
    count_ = 0;
  }
  sum_ += eta;
  ++count_;
  ++batches_;
  n_total_ += stats.n();
  if (phase_ != Phase::initial) n_post_ += stats.n();
  mean_ = sum_ / static_cast<double>(count_);
}

EstimateReport AveEstimator::estimate() const {
  if (count_ == 0) throw InsufficientData("AVE: no batches ingested");
  EstimateReport rep;
  split(rep, mean_, schema_, phase_);
  rep.n_total = n_total_;
  rep.m_post = n_post_;
  rep.rho_hat = n_total_ > 0 ? static_cast<double>(n_post_) / static_cast<double>(n_total_) : 0.0;
  return rep;
}

}  // namespace hetstream
