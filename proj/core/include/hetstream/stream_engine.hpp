#pragma once

// Online-updating estimation for a linear model whose covariate set grows
// mid-stream. Pre-change batches observe x only; after the first event z is
// observed as well, and after an optional second event w too. Old-phase rows
// are rewritten in terms of the full coefficient vector through projection
// maps estimated on the first batch of each new phase:
//
//   pre-change rows   xᵀβ + xᵀB̂θ (+ xᵀĈγ)
//   first-update rows xᵀβ + zᵀθ (+ (x,z)ᵀD̂γ)
//   second-update rows xᵀβ + zᵀθ + wᵀγ
//
// Only per-phase sufficient statistics are retained; every estimate, SSE and
// test statistic is assembled from them.

#include <cstdint>
#include <optional>
#include <vector>

#include "hetstream/batch_stats.hpp"
#include "hetstream/linalg.hpp"

namespace hetstream {

// How a row weight w enters the Gram sums: linearly (w·XᵀX, as the
// cumulative V-matrices are written) or squared (w²·XᵀX, i.e. the rows of
// the weighted model multiplied by w).
enum class WeightConvention { linear, gram_squared };

enum class WeightProvenance { non_random, estimated };

// uncorrelated: homogenization maps are forced to zero.
enum class CaseLabel { uncorrelated, correlated };

// frozen: projection maps come from the first batch of their phase and stay
// put. refined: estimated maps are recomputed after every ingest from the
// pooled raw sums of all batches observing the target covariates.
enum class ProjectionMode { frozen, refined };

const char* to_string(WeightConvention c);
const char* to_string(WeightProvenance p);
const char* to_string(CaseLabel c);
const char* to_string(ProjectionMode m);

// Initial choices of the error variance, of the coefficients of the newly
// observed group(s) and of their second moment. For the second update the
// coefficient vector is (θ₀, γ₀) and the moment is E₀[(z,w)(z,w)ᵀ].
struct InitialChoices {
  double sigma0_sq = 1.0;
  Vec coef0;
  Mat e0;
};

// Row weights per segment, oldest segment first. After the first update the
// segments are (pre-change, post-change) with weights (σ̄_ε⁻¹, σ₀⁻¹); after
// the second (pre, first-update, second-update).
struct WeightSpec {
  double sigma0_sq = 1.0;
  Vec theta0;
  Mat e0_zz;
  // σ̄² of each older segment: σ̄² = c₀ᵀE₀c₀ + σ₀² over the coefficients that
  // segment does not observe.
  std::vector<double> sigma_bar_sq;
  std::vector<double> row_weights;
  WeightConvention convention = WeightConvention::gram_squared;
  WeightProvenance provenance = WeightProvenance::estimated;

  double sigma_eps_bar_sq() const { return sigma_bar_sq.front(); }
  // Pre-change and current-phase Gram multipliers: σ̄_ε⁻¹ and σ₀⁻¹ under
  // linear, their squares under gram-squared.
  double w1() const { return gram_weight(0); }
  double w2() const { return gram_weight(row_weights.size() - 1); }

  // Multiplier applied to the Gram sums of `segment` (w or w²).
  double gram_weight(std::size_t segment) const;

  // Weights for the first update from the initial choices.
  static WeightSpec first_update(const InitialChoices& choices, WeightConvention convention,
                                 WeightProvenance provenance);
  // Weights for the second update; `q` is the size of z within coef0/e0.
  static WeightSpec second_update(const InitialChoices& choices, int q,
                                  WeightConvention convention, WeightProvenance provenance);
};

struct HomogenizationMap {
  Mat b_hat;                 // p×q
  std::optional<Mat> c_hat;  // p×r
  std::optional<Mat> d_hat;  // (p+q)×r
  int estimated_on = 0;      // 1-based batch index of the first post-change batch
  std::optional<int> second_estimated_on;
  // Whether B̂ (resp. Ĉ, D̂) tracks the pooled sums; never set for supplied
  // or forced-zero maps.
  bool refined = false;
  bool second_refined = false;
};

struct EngineConfig {
  WeightConvention convention = WeightConvention::gram_squared;
  double pivot_tolerance = linalg::kPivotTolerance;
  ProjectionMode projection = ProjectionMode::frozen;
};

struct UpdateOptions {
  CaseLabel case_label = CaseLabel::correlated;
  // Non-random initial choices; estimated on the first post-change batch
  // when absent.
  std::optional<InitialChoices> initial;
  // Supplied projection map; overrides both estimation and the case label.
  std::optional<Mat> b_hat;
};

struct SecondUpdateOptions {
  std::optional<InitialChoices> initial;
  std::optional<Mat> c_hat;
  std::optional<Mat> d_hat;
};

struct EstimateReport {
  Phase phase = Phase::initial;
  Vec beta;
  std::optional<Vec> theta;
  std::optional<Vec> gamma;
  std::optional<Vec> theta_naive;
  // Plug-in sandwich covariance of the stacked estimate; absent when a
  // segment is too small to estimate its error variance.
  std::optional<Mat> cov_plugin;
  double rho_hat = 0.0;
  std::int64_t n_total = 0;
  std::int64_t m_post = 0;
  CaseLabel case_label = CaseLabel::correlated;

  // (β, θ, γ) stacked over the groups present.
  Vec stacked() const;
};

// η_j = (A_{j-1} + W_j)⁻¹ (W_j·η̂_j + A_{j-1}·η_{j-1}), the two-term online
// form: A_{j-1} is the accumulated system before batch j, W_j the weighted
// system of batch j alone and η̂_j its own least-squares solution.
Vec recursive_update(const Mat& previous_system, const Vec& previous_eta, const Mat& batch_system,
                     const Vec& batch_eta, double tolerance = linalg::kPivotTolerance);

class AccumulatorState {
 public:
  explicit AccumulatorState(StreamSchema schema, EngineConfig config = {});

  const StreamSchema& schema() const { return schema_; }
  const EngineConfig& config() const { return config_; }
  Phase phase() const { return phase_; }
  CaseLabel case_label() const { return case_label_; }

  int batches() const { return batches_; }
  std::optional<int> k_index() const;
  std::optional<int> m_index() const;
  std::int64_t n_total() const;
  // Observations after the first covariate addition.
  std::int64_t m_post() const;

  const std::optional<WeightSpec>& weights() const { return weights_; }
  const std::optional<HomogenizationMap>& homogenization() const { return homog_; }

  // Raw (unweighted) sums of one segment.
  const BatchStats& segment(Phase which) const;

  void ingest_pre_change(const BatchStats& stats);
  void begin_update_phase(const BatchStats& first_post, const UpdateOptions& options = {});
  void ingest_post_change(const BatchStats& stats);
  void begin_second_update(const BatchStats& first_post, const SecondUpdateOptions& options = {});

  // Weighted cumulative V-matrices under the configured convention.
  Mat v_x() const;
  Mat v_x_pre() const;
  Mat v_xz() const;
  Mat v_z() const;
  Vec v_xy() const;
  Vec v_zy() const;
  // Σ w²·yᵀy over all rows.
  double weighted_yty() const;

  // Bordered system A·η = b of the homogenized estimator.
  Mat system_matrix() const;
  Vec system_rhs() const;
  // Weighted system of one batch in the current phase (ω·Gram, ω·Σuy).
  Mat batch_system(const BatchStats& stats) const;
  Vec batch_rhs(const BatchStats& stats) const;

  // Gram matrix Σ SᵀS of the row-weighted homogenized covariates and Σ Sᵀ(w·y).
  Mat homogenized_gram() const;
  Vec homogenized_cross() const;

  // Homogenized least-squares fit snapshotted at the last ingest; absent
  // before the first ingest or while the homogenized Gram is singular.
  const std::optional<Vec>& eta_tilde() const { return fit_; }

  EstimateReport estimate() const;
  Vec naive_theta() const;
  double update_sse() const;
  Mat asymptotic_covariance() const;
  // V^Z − V^ZX (V^X)⁻¹ (V^X_k B̂ + V^XZ), assembled from the accumulators.
  Mat numerator_factor() const;

 private:
  friend struct StateAccess;

  struct Term {
    const BatchStats* stats;
    Mat instrument;  // D×d embedding of the observed covariates
    Mat homog;       // D×d homogenized covariate map
    double gram_weight;
    double row_weight;
  };

  std::vector<Term> terms() const;
  int full_dim() const;
  BatchStats& current_segment();
  void absorb(const BatchStats& stats);
  void refresh_maps();
  void require_phase(Phase expected, const char* op) const;
  Vec solve_system() const;
  double segment_residual_variance(const BatchStats& seg) const;

  StreamSchema schema_;
  EngineConfig config_;
  Phase phase_ = Phase::initial;
  CaseLabel case_label_ = CaseLabel::correlated;

  BatchStats pre_;
  BatchStats mid_;
  BatchStats post_;
  int batches_ = 0;
  int k_ = 0;
  int m_ = 0;

  std::optional<WeightSpec> weights_;
  std::optional<HomogenizationMap> homog_;

  // SSE recursion: sse_ is SSE_j, quad_ the η̃ᵀVη̃ term of the last fit.
  double sse_ = 0.0;
  double quad_ = 0.0;
  bool sse_valid_ = false;
  std::optional<Vec> fit_;
};

AccumulatorState new_stream(const StreamSchema& schema, const EngineConfig& config = {});

}  // namespace hetstream
