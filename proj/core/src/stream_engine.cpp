#include "hetstream/stream_engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetstream/error.hpp"

namespace hetstream {

const char* to_string(WeightConvention c) {
  return c == WeightConvention::linear ? "linear" : "gram-squared";
}

const char* to_string(WeightProvenance p) {
  return p == WeightProvenance::non_random ? "non-random" : "estimated";
}

const char* to_string(CaseLabel c) {
  return c == CaseLabel::uncorrelated ? "uncorrelated" : "correlated";
}

const char* to_string(ProjectionMode m) {
  return m == ProjectionMode::refined ? "refined" : "frozen";
}

Vec EstimateReport::stacked() const {
  const Eigen::Index q = theta ? theta->size() : 0;
  const Eigen::Index r = gamma ? gamma->size() : 0;
  Vec out(beta.size() + q + r);
  out.head(beta.size()) = beta;
  if (theta) out.segment(beta.size(), q) = *theta;
  if (gamma) out.tail(r) = *gamma;
  return out;
}

namespace {

void check_choices(const InitialChoices& c, Eigen::Index dim, const char* what) {
  if (!(c.sigma0_sq > 0.0) || !std::isfinite(c.sigma0_sq)) {
    throw InvalidConfig(std::string(what) + ": sigma0_sq must be positive and finite");
  }
  if (c.coef0.size() != dim || c.e0.rows() != dim || c.e0.cols() != dim) {
    throw DimensionMismatch(std::string(what) + ": initial choices must have dimension " +
                            std::to_string(dim));
  }
}

WeightSpec make_spec(const InitialChoices& c, std::vector<double> sigma_bar_sq,
                     WeightConvention convention, WeightProvenance provenance) {
  WeightSpec spec;
  spec.sigma0_sq = c.sigma0_sq;
  spec.theta0 = c.coef0;
  spec.e0_zz = c.e0;
  spec.convention = convention;
  spec.provenance = provenance;
  for (double s : sigma_bar_sq) {
    if (s < c.sigma0_sq) {
      throw InvalidConfig("weights: the implied pre-change error variance " + std::to_string(s) +
                          " is below sigma0_sq; E0 must be positive semidefinite");
    }
    spec.row_weights.push_back(1.0 / std::sqrt(s));
  }
  spec.row_weights.push_back(1.0 / std::sqrt(c.sigma0_sq));
  spec.sigma_bar_sq = std::move(sigma_bar_sq);
  return spec;
}

// Initial choices from the OLS fit of y on all covariates observed in `stats`.
InitialChoices estimate_choices(const BatchStats& stats, int leading, double tolerance) {
  const int d = stats.dim();
  if (stats.n() <= d) {
    throw SingularMatrix("first post-change batch has " + std::to_string(stats.n()) +
                         " observations; at least " + std::to_string(d + 1) +
                         " are needed to estimate the initial choices");
  }
  Vec eta;
  try {
    eta = linalg::solve_spd(stats.gram(), stats.cross(), tolerance);
  } catch (const SingularMatrix&) {
    throw SingularMatrix("first post-change batch has a rank-deficient design; at least " +
                         std::to_string(d + 1) + " observations in general position are needed");
  }
  const double n = static_cast<double>(stats.n());
  const double sse = std::max(stats.yty() - stats.cross().dot(eta), 0.0);
  const double mean_sq = stats.yty() / n;
  // Noiseless fixtures would otherwise give an infinite weight.
  const double floor = 1e-12 * (mean_sq > 0.0 ? mean_sq : 1.0);
  InitialChoices c;
  c.sigma0_sq = std::max(sse / (n - d), floor);
  c.coef0 = eta.tail(d - leading);
  c.e0 = stats.gram().bottomRightCorner(d - leading, d - leading) / n;
  return c;
}

Mat projection(const BatchStats& stats, const Mat& target, int leading, double tolerance,
               const char* name) {
  try {
    return linalg::solve_spd(stats.gram().topLeftCorner(leading, leading), target, tolerance);
  } catch (const SingularMatrix&) {
    throw SingularMatrix(std::string("cannot estimate ") + name +
                         ": the estimation batch needs at least " + std::to_string(leading) +
                         " observations with a full-rank design (got " +
                         std::to_string(stats.n()) + ")");
  }
}

// [I; 0] with `rows` rows and `cols` columns.
Mat embedding(Eigen::Index rows, Eigen::Index cols) {
  Mat e = Mat::Zero(rows, cols);
  e.topLeftCorner(cols, cols).setIdentity();
  return e;
}

void check_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionMismatch(std::string(name) + " must be " + std::to_string(rows) + "x" +
                            std::to_string(cols));
  }
}

}  // namespace

double WeightSpec::gram_weight(std::size_t segment) const {
  const double w = row_weights.at(segment);
  return convention == WeightConvention::linear ? w : w * w;
}

WeightSpec WeightSpec::first_update(const InitialChoices& choices, WeightConvention convention,
                                    WeightProvenance provenance) {
  check_choices(choices, choices.coef0.size(), "first update");
  const double bar = linalg::quad_form(choices.e0, choices.coef0) + choices.sigma0_sq;
  return make_spec(choices, {bar}, convention, provenance);
}

WeightSpec WeightSpec::second_update(const InitialChoices& choices, int q,
                                     WeightConvention convention, WeightProvenance provenance) {
  check_choices(choices, choices.coef0.size(), "second update");
  const Eigen::Index r = choices.coef0.size() - q;
  if (q < 1 || r < 1) throw DimensionMismatch("second update: coef0 must hold theta and gamma");
  const double pre = linalg::quad_form(choices.e0, choices.coef0) + choices.sigma0_sq;
  const double mid =
      linalg::quad_form(choices.e0.bottomRightCorner(r, r), choices.coef0.tail(r)) +
      choices.sigma0_sq;
  return make_spec(choices, {pre, mid}, convention, provenance);
}

Vec recursive_update(const Mat& previous_system, const Vec& previous_eta, const Mat& batch_system,
                     const Vec& batch_eta, double tolerance) {
  const Mat system = previous_system + batch_system;
  const Vec rhs = batch_system * batch_eta + previous_system * previous_eta;
  return linalg::solve_general(system, rhs, tolerance);
}

AccumulatorState::AccumulatorState(StreamSchema schema, EngineConfig config)
    : schema_(std::move(schema)), config_(config) {
  schema_.validate();
  if (schema_.names.empty()) {
    schema_ = StreamSchema::with_default_names(schema_.p, schema_.q, schema_.r);
  }
  pre_ = BatchStats::zero(schema_, Phase::initial);
  mid_ = BatchStats::zero(schema_, Phase::updated);
  post_ = BatchStats::zero(schema_, Phase::twice_updated);
}

AccumulatorState new_stream(const StreamSchema& schema, const EngineConfig& config) {
  return AccumulatorState(schema, config);
}

std::optional<int> AccumulatorState::k_index() const {
  if (phase_ == Phase::initial) return std::nullopt;
  return k_;
}

std::optional<int> AccumulatorState::m_index() const {
  if (phase_ != Phase::twice_updated) return std::nullopt;
  return m_;
}

std::int64_t AccumulatorState::n_total() const { return pre_.n() + mid_.n() + post_.n(); }
std::int64_t AccumulatorState::m_post() const { return mid_.n() + post_.n(); }

const BatchStats& AccumulatorState::segment(Phase which) const {
  switch (which) {
    case Phase::initial:
      return pre_;
    case Phase::updated:
      return mid_;
    case Phase::twice_updated:
      return post_;
  }
  return pre_;
}

BatchStats& AccumulatorState::current_segment() {
  return const_cast<BatchStats&>(segment(phase_));
}

void AccumulatorState::require_phase(Phase expected, const char* op) const {
  if (phase_ != expected) {
    throw PhaseMismatch(std::string(op) + ": stream is in phase " + to_string(phase_) +
                        ", expected " + to_string(expected));
  }
}

int AccumulatorState::full_dim() const { return schema_.observed_dim(phase_); }

std::vector<AccumulatorState::Term> AccumulatorState::terms() const {
  const int p = schema_.p;
  const int q = schema_.q;
  const int r = schema_.r;
  std::vector<Term> out;
  if (phase_ == Phase::initial) {
    out.push_back({&pre_, Mat::Identity(p, p), Mat::Identity(p, p), 1.0, 1.0});
    return out;
  }
  const WeightSpec& w = *weights_;
  const int d = full_dim();

  Mat pre_h(d, p);
  pre_h.topRows(p).setIdentity();
  pre_h.middleRows(p, q) = homog_->b_hat.transpose();
  if (phase_ == Phase::updated) {
    out.push_back({&pre_, embedding(d, p), pre_h, w.gram_weight(0), w.row_weights[0]});
    out.push_back({&mid_, Mat::Identity(d, d), Mat::Identity(d, d), w.gram_weight(1),
                   w.row_weights[1]});
    return out;
  }
  pre_h.bottomRows(r) = homog_->c_hat->transpose();
  Mat mid_h(d, p + q);
  mid_h.topRows(p + q).setIdentity();
  mid_h.bottomRows(r) = homog_->d_hat->transpose();
  out.push_back({&pre_, embedding(d, p), pre_h, w.gram_weight(0), w.row_weights[0]});
  out.push_back({&mid_, embedding(d, p + q), mid_h, w.gram_weight(1), w.row_weights[1]});
  out.push_back(
      {&post_, Mat::Identity(d, d), Mat::Identity(d, d), w.gram_weight(2), w.row_weights[2]});
  return out;
}

Mat AccumulatorState::system_matrix() const {
  const int d = full_dim();
  Mat a = Mat::Zero(d, d);
  for (const auto& t : terms()) {
    a += t.gram_weight * t.instrument * t.stats->gram() * t.homog.transpose();
  }
  return a;
}

Vec AccumulatorState::system_rhs() const {
  Vec b = Vec::Zero(full_dim());
  for (const auto& t : terms()) b += t.gram_weight * t.instrument * t.stats->cross();
  return b;
}

Mat AccumulatorState::homogenized_gram() const {
  const int d = full_dim();
  Mat g = Mat::Zero(d, d);
  for (const auto& t : terms()) {
    g += (t.row_weight * t.row_weight) * t.homog * t.stats->gram() * t.homog.transpose();
  }
  return linalg::symmetrize(g);
}

Vec AccumulatorState::homogenized_cross() const {
  Vec u = Vec::Zero(full_dim());
  for (const auto& t : terms()) u += (t.row_weight * t.row_weight) * t.homog * t.stats->cross();
  return u;
}

double AccumulatorState::weighted_yty() const {
  double s = 0.0;
  for (const auto& t : terms()) s += t.row_weight * t.row_weight * t.stats->yty();
  return s;
}

Mat AccumulatorState::v_x() const { return system_matrix().topLeftCorner(schema_.p, schema_.p); }

Mat AccumulatorState::v_x_pre() const {
  return terms().front().gram_weight * pre_.xtx();
}

Mat AccumulatorState::v_xz() const {
  Mat out = Mat::Zero(schema_.p, schema_.q);
  if (phase_ == Phase::initial) return out;
  const auto ts = terms();
  for (std::size_t i = 1; i < ts.size(); ++i) out += ts[i].gram_weight * ts[i].stats->xtz();
  return out;
}

Mat AccumulatorState::v_z() const {
  if (phase_ == Phase::initial) return Mat::Zero(schema_.q, schema_.q);
  return system_matrix().block(schema_.p, schema_.p, schema_.q, schema_.q);
}

Vec AccumulatorState::v_xy() const { return system_rhs().head(schema_.p); }

Vec AccumulatorState::v_zy() const {
  if (phase_ == Phase::initial) return Vec::Zero(schema_.q);
  return system_rhs().segment(schema_.p, schema_.q);
}

Mat AccumulatorState::batch_system(const BatchStats& stats) const {
  if (stats.phase() != phase_) {
    throw PhaseMismatch("batch_system: batch observes " + std::string(to_string(stats.phase())) +
                        " covariates, stream is " + to_string(phase_));
  }
  return terms().back().gram_weight * stats.gram();
}

Vec AccumulatorState::batch_rhs(const BatchStats& stats) const {
  if (stats.phase() != phase_) throw PhaseMismatch("batch_rhs: phase mismatch");
  return terms().back().gram_weight * stats.cross();
}

void AccumulatorState::absorb(const BatchStats& stats) {
  if (!stats.phase_matches_schema(schema_)) {
    throw SchemaMismatch("ingest: batch dimensions do not match the stream schema");
  }
  const double w = terms().back().row_weight;
  // SSE_{n_j} + η̂ᵀ_{n_j} SᵀS η̂_{n_j} is the batch's weighted yᵀy, so the
  // per-batch fit never has to be formed.
  const double batch_term = w * w * stats.yty();
  current_segment() += stats;
  ++batches_;
  if (phase_ == Phase::initial) ++k_;
  if (phase_ == Phase::updated) ++m_;
  refresh_maps();

  const double carried = sse_ + quad_ + batch_term;
  try {
    const Mat g = homogenized_gram();
    const Vec u = homogenized_cross();
    Vec fit = linalg::solve_spd(g, u, config_.pivot_tolerance);
    const double quad = linalg::quad_form(g, fit);
    if (n_total() <= fit.size()) {
      // Square nonsingular design: the fit interpolates, whatever rounding
      // the difference below would leave.
      sse_ = 0.0;
      quad_ = carried;
    } else {
      sse_ = carried - quad;
      quad_ = quad;
    }
    sse_valid_ = true;
    fit_ = std::move(fit);
  } catch (const SingularMatrix&) {
    sse_ = carried;
    quad_ = 0.0;
    sse_valid_ = false;
    fit_.reset();
  }
}

void AccumulatorState::refresh_maps() {
  if (!homog_) return;
  const int p = schema_.p;
  if (homog_->refined) {
    Mat xtx = mid_.xtx();
    Mat xtz = mid_.xtz();
    if (phase_ == Phase::twice_updated) {
      xtx += post_.xtx();
      xtz += post_.gram().block(0, p, p, schema_.q);
    }
    homog_->b_hat = linalg::solve_spd(xtx, xtz, config_.pivot_tolerance);
  }
  if (phase_ == Phase::twice_updated && homog_->second_refined) {
    const int pq = p + schema_.q;
    homog_->c_hat = projection(post_, post_.xtw(), p, config_.pivot_tolerance, "C-hat");
    homog_->d_hat = projection(post_, post_.gram().block(0, pq, pq, schema_.r), pq,
                               config_.pivot_tolerance, "D-hat");
  }
}

void AccumulatorState::ingest_pre_change(const BatchStats& stats) {
  require_phase(Phase::initial, "ingest_pre_change");
  if (stats.phase() != Phase::initial) {
    throw PhaseMismatch("ingest_pre_change: batch observes " +
                        std::string(to_string(stats.phase())) + " covariates");
  }
  absorb(stats);
}

void AccumulatorState::ingest_post_change(const BatchStats& stats) {
  if (phase_ == Phase::initial) {
    throw PhaseMismatch("ingest_post_change: no covariate-addition event has occurred");
  }
  if (stats.phase() != phase_) {
    throw PhaseMismatch("ingest_post_change: batch observes " +
                        std::string(to_string(stats.phase())) + " covariates, stream is " +
                        to_string(phase_));
  }
  absorb(stats);
}

void AccumulatorState::begin_update_phase(const BatchStats& first_post,
                                          const UpdateOptions& options) {
  require_phase(Phase::initial, "begin_update_phase");
  if (schema_.q < 1) throw InvalidSchema("begin_update_phase: schema declares no z covariates");
  if (first_post.phase() != Phase::updated) {
    throw PhaseMismatch("begin_update_phase: batch must observe x and z");
  }
  if (!first_post.phase_matches_schema(schema_)) {
    throw SchemaMismatch("begin_update_phase: batch dimensions do not match the schema");
  }
  const int p = schema_.p;
  const int q = schema_.q;

  Mat b_hat;
  if (options.b_hat) {
    check_shape(*options.b_hat, p, q, "b_hat");
    b_hat = *options.b_hat;
  } else if (options.case_label == CaseLabel::uncorrelated) {
    b_hat = Mat::Zero(p, q);
  } else {
    b_hat = projection(first_post, first_post.xtz(), p, config_.pivot_tolerance, "B-hat");
  }

  WeightSpec spec;
  if (options.initial) {
    check_choices(*options.initial, q, "begin_update_phase");
    spec = WeightSpec::first_update(*options.initial, config_.convention,
                                    WeightProvenance::non_random);
  } else {
    spec = WeightSpec::first_update(estimate_choices(first_post, p, config_.pivot_tolerance),
                                    config_.convention, WeightProvenance::estimated);
  }

  const double w1 = spec.row_weights.front();
  case_label_ = options.case_label;
  weights_ = std::move(spec);
  homog_ = HomogenizationMap{std::move(b_hat), std::nullopt, std::nullopt, batches_ + 1,
                             std::nullopt};
  homog_->refined = config_.projection == ProjectionMode::refined && !options.b_hat &&
                    options.case_label == CaseLabel::correlated;
  // Pre-change fit terms were accumulated with unit weight.
  sse_ *= w1 * w1;
  quad_ *= w1 * w1;
  phase_ = Phase::updated;
  mid_ = BatchStats::zero(schema_, Phase::updated);
  absorb(first_post);
}

void AccumulatorState::begin_second_update(const BatchStats& first_post,
                                           const SecondUpdateOptions& options) {
  require_phase(Phase::updated, "begin_second_update");
  if (schema_.r < 1) throw InvalidSchema("begin_second_update: schema declares no w covariates");
  if (first_post.phase() != Phase::twice_updated) {
    throw PhaseMismatch("begin_second_update: batch must observe x, z and w");
  }
  if (!first_post.phase_matches_schema(schema_)) {
    throw SchemaMismatch("begin_second_update: batch dimensions do not match the schema");
  }
  const int p = schema_.p;
  const int q = schema_.q;
  const int r = schema_.r;
  const bool zero_maps = case_label_ == CaseLabel::uncorrelated;

  Mat c_hat;
  if (options.c_hat) {
    check_shape(*options.c_hat, p, r, "c_hat");
    c_hat = *options.c_hat;
  } else if (zero_maps) {
    c_hat = Mat::Zero(p, r);
  } else {
    c_hat = projection(first_post, first_post.xtw(), p, config_.pivot_tolerance, "C-hat");
  }
  Mat d_hat;
  if (options.d_hat) {
    check_shape(*options.d_hat, p + q, r, "d_hat");
    d_hat = *options.d_hat;
  } else if (zero_maps) {
    d_hat = Mat::Zero(p + q, r);
  } else {
    d_hat = projection(first_post, first_post.gram().block(0, p + q, p + q, r), p + q,
                       config_.pivot_tolerance, "D-hat");
  }

  WeightSpec spec;
  if (options.initial) {
    check_choices(*options.initial, q + r, "begin_second_update");
    spec = WeightSpec::second_update(*options.initial, q, config_.convention,
                                     WeightProvenance::non_random);
  } else {
    spec = WeightSpec::second_update(estimate_choices(first_post, p, config_.pivot_tolerance), q,
                                     config_.convention, WeightProvenance::estimated);
  }

  weights_ = std::move(spec);
  homog_->c_hat = std::move(c_hat);
  homog_->d_hat = std::move(d_hat);
  homog_->second_estimated_on = batches_ + 1;
  homog_->second_refined = config_.projection == ProjectionMode::refined && !options.c_hat &&
                           !options.d_hat && !zero_maps;
  phase_ = Phase::twice_updated;
  post_ = BatchStats::zero(schema_, Phase::twice_updated);
  // The frozen segments are re-homogenized under the new maps and weights;
  // restart the recursion from their weighted response moment.
  const auto ts = terms();
  sse_ = ts[0].row_weight * ts[0].row_weight * pre_.yty() +
         ts[1].row_weight * ts[1].row_weight * mid_.yty();
  quad_ = 0.0;
  sse_valid_ = false;
  absorb(first_post);
}

Vec AccumulatorState::solve_system() const {
  return linalg::solve_general(system_matrix(), system_rhs(), config_.pivot_tolerance);
}

EstimateReport AccumulatorState::estimate() const {
  if (n_total() == 0) throw InsufficientData("estimate: no observations ingested");
  if (phase_ != Phase::initial && segment(phase_).n() == 0) {
    throw InsufficientData("estimate: the current phase has no observations");
  }
  const Vec eta = solve_system();
  EstimateReport rep;
  rep.phase = phase_;
  rep.case_label = case_label_;
  rep.n_total = n_total();
  rep.m_post = m_post();
  rep.rho_hat = static_cast<double>(rep.m_post) / static_cast<double>(rep.n_total);
  rep.beta = eta.head(schema_.p);
  if (phase_ != Phase::initial) {
    rep.theta = eta.segment(schema_.p, schema_.q);
    try {
      rep.theta_naive = naive_theta();
    } catch (const Error&) {
    }
  }
  if (phase_ == Phase::twice_updated) rep.gamma = eta.tail(schema_.r);
  try {
    rep.cov_plugin = asymptotic_covariance();
  } catch (const Error&) {
  }
  return rep;
}

Vec AccumulatorState::naive_theta() const {
  if (phase_ == Phase::initial) throw PhaseMismatch("naive_theta: z is not observed yet");
  const BatchStats& seg = segment(phase_);
  if (seg.n() == 0) throw InsufficientData("naive_theta: no post-change observations");
  return linalg::solve_spd(seg.gram(), seg.cross(), config_.pivot_tolerance)
      .segment(schema_.p, schema_.q);
}

double AccumulatorState::update_sse() const {
  if (batches_ == 0) throw InsufficientData("update_sse: no observations ingested");
  if (!sse_valid_) {
    throw SingularMatrix("update_sse: the homogenized design is rank deficient");
  }
  return std::max(sse_, 0.0);
}

double AccumulatorState::segment_residual_variance(const BatchStats& seg) const {
  const int d = seg.dim();
  if (seg.n() <= d) {
    throw InsufficientData("residual variance needs more than " + std::to_string(d) +
                           " observations in the segment");
  }
  const Vec eta = linalg::solve_spd(seg.gram(), seg.cross(), config_.pivot_tolerance);
  const double sse = std::max(seg.yty() - seg.cross().dot(eta), 0.0);
  return sse / static_cast<double>(seg.n() - d);
}

Mat AccumulatorState::asymptotic_covariance() const {
  if (n_total() == 0) throw InsufficientData("asymptotic_covariance: no observations");
  const double n = static_cast<double>(n_total());
  const int p = schema_.p;
  const int q = schema_.q;

  if (phase_ == Phase::initial) {
    return segment_residual_variance(pre_) *
           linalg::inverse_spd(pre_.xtx(), config_.pivot_tolerance);
  }

  const auto ts = terms();
  Mat omega;
  Mat phi;
  if (phase_ == Phase::updated) {
    if (mid_.n() == 0) throw InsufficientData("asymptotic_covariance: no post-change data");
    const double m = static_cast<double>(mid_.n());
    const double rho = m / n;
    const double om1 = ts[0].gram_weight;
    const double om2 = ts[1].gram_weight;
    const double sigma_eps_sq = pre_.n() > 0 ? segment_residual_variance(pre_) : 0.0;
    const double sigma_sq = segment_residual_variance(mid_);
    const Mat sxx = (pre_.xtx() + mid_.xtx()) / n;
    const Mat sxz = mid_.xtz() / m;
    const Mat szz = mid_.ztz() / m;
    const double blend = (1.0 - rho) * om1 + rho * om2;
    const double post = rho * om2 * om2 * sigma_sq;

    omega = Mat::Zero(p + q, p + q);
    phi = Mat::Zero(p + q, p + q);
    omega.topLeftCorner(p, p) = blend * sxx;
    omega.bottomRightCorner(q, q) = rho * om2 * szz;
    phi.topLeftCorner(p, p) =
        ((1.0 - rho) * om1 * om1 * sigma_eps_sq + rho * om2 * om2 * sigma_sq) * sxx;
    phi.bottomRightCorner(q, q) = post * szz;
    if (case_label_ == CaseLabel::correlated) {
      omega.topRightCorner(p, q) = blend * sxz;
      omega.bottomLeftCorner(q, p) = rho * om2 * sxz.transpose();
      phi.topRightCorner(p, q) = post * sxz;
      phi.bottomLeftCorner(q, p) = post * sxz.transpose();
    }
  } else {
    // Estimating-equation sandwich: Ω = A/N, Φ = Σ ω²σ²·P G Pᵀ / N.
    omega = system_matrix() / n;
    const int d = full_dim();
    phi = Mat::Zero(d, d);
    for (const auto& t : ts) {
      if (t.stats->n() == 0) continue;
      const double s2 = segment_residual_variance(*t.stats);
      phi += (t.gram_weight * t.gram_weight * s2) * t.instrument * t.stats->gram() *
             t.instrument.transpose();
    }
    phi /= n;
  }
  const Mat left = linalg::solve_general(omega, phi, config_.pivot_tolerance);
  const Mat cov =
      linalg::solve_general(omega, Mat(left.transpose()), config_.pivot_tolerance).transpose();
  return linalg::symmetrize(cov) / n;
}

Mat AccumulatorState::numerator_factor() const {
  require_phase(Phase::updated, "numerator_factor");
  const int p = schema_.p;
  const int q = schema_.q;
  const Mat a = system_matrix();
  const Mat cross =
      linalg::solve_spd(a.topLeftCorner(p, p), Mat(a.topRightCorner(p, q)), config_.pivot_tolerance);
  return a.bottomRightCorner(q, q) - a.bottomLeftCorner(q, p) * cross;
}

}  // namespace hetstream
