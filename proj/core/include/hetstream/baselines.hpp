#pragma once

// Competitors to the homogenized estimator. NUE refits on the current
// segment only (no use of data from before the last covariate addition);
// AVE averages the per-batch least-squares estimates of the current segment.

#include <cstdint>

#include "hetstream/batch_stats.hpp"
#include "hetstream/inference.hpp"
#include "hetstream/stream_engine.hpp"

namespace hetstream {

enum class BaselineKind { nue, ave };

const char* to_string(BaselineKind kind);

class NueEstimator {
 public:
  explicit NueEstimator(StreamSchema schema, double tolerance = linalg::kPivotTolerance);

  // A batch of a later phase starts a new segment; an earlier phase is a
  // PhaseMismatch.
  void ingest(const BatchStats& stats);

  Phase phase() const { return segment_.phase(); }
  const BatchStats& segment() const { return segment_; }
  int batches() const { return batches_; }
  int segment_batches() const { return segment_batches_; }

  // Pooled OLS of the current segment.
  EstimateReport estimate() const;
  // Partial F test of θ = 0 inside the first-update segment: restricted fit
  // on x alone, df (q, M − p − q).
  TestReport test_theta_zero(double alpha) const;

 private:
  StreamSchema schema_;
  double tolerance_;
  BatchStats segment_;
  int batches_ = 0;
  int segment_batches_ = 0;
};

class AveEstimator {
 public:
  explicit AveEstimator(StreamSchema schema, double tolerance = linalg::kPivotTolerance);

  // Throws SingularBatch naming the 1-based batch index when the batch's own
  // design is not invertible.
  void ingest(const BatchStats& stats);

  Phase phase() const { return phase_; }
  int count() const { return count_; }
  int batches() const { return batches_; }
  const Vec& mean() const { return mean_; }

  EstimateReport estimate() const;

 private:
  StreamSchema schema_;
  double tolerance_;
  Phase phase_ = Phase::initial;
  Vec sum_;
  Vec mean_;
  int count_ = 0;
  int batches_ = 0;
  std::int64_t n_total_ = 0;
  std::int64_t n_post_ = 0;
};

}  // namespace hetstream
