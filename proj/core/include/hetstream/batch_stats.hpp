#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetstream/linalg.hpp"

namespace hetstream {

// Which covariate groups a batch (or the stream) observes.
enum class Phase : int {
  initial = 0,        // x only
  updated = 1,        // x and z
  twice_updated = 2,  // x, z and w
};

const char* to_string(Phase phase);

// Dimensions of the three covariate groups and their column names in the
// order x1..xp, z1..zq, w1..wr.
struct StreamSchema {
  int p = 0;
  int q = 0;
  int r = 0;
  std::vector<std::string> names;

  // Fills `names` with the default x1.., z1.., w1.. labels.
  static StreamSchema with_default_names(int p, int q, int r);

  // Throws InvalidSchema.
  void validate() const;

  // Number of covariates observed in `phase`.
  int observed_dim(Phase phase) const;

  bool same_dims(const StreamSchema& other) const {
    return p == other.p && q == other.q && r == other.r;
  }
};

// One batch of raw observations; rows are observations. Absent groups have
// zero columns.
struct RawBatch {
  Mat x;
  Mat z;
  Mat w;
  Vec y;

  Eigen::Index rows() const { return y.size(); }
  Phase phase() const;
};

// Sufficient statistics of a batch: the joint Gram matrix of the observed
// covariates u = (x, z, w), the cross-moment Σ u·y, Σ y² and the count.
class BatchStats {
 public:
  BatchStats() = default;

  // Additive identity for `phase`.
  static BatchStats zero(const StreamSchema& schema, Phase phase);

  // Assembles stats from precomputed blocks (used by deserialization).
  static BatchStats from_moments(const StreamSchema& schema, Phase phase, std::int64_t n,
                                 Mat gram, Vec cross, double yty);

  Phase phase() const { return phase_; }
  std::int64_t n() const { return n_; }
  int p() const { return p_; }
  int q() const { return q_; }
  int r() const { return r_; }
  int dim() const { return static_cast<int>(cross_.size()); }

  const Mat& gram() const { return gram_; }
  const Vec& cross() const { return cross_; }
  double yty() const { return yty_; }

  Mat xtx() const;
  Mat xtz() const;
  Mat ztz() const;
  Mat xtw() const;
  Mat ztw() const;
  Mat wtw() const;
  Vec xty() const;
  Vec zty() const;
  Vec wty() const;

  // True when the block sizes agree with `schema` for this batch's phase.
  bool phase_matches_schema(const StreamSchema& schema) const;

  BatchStats& operator+=(const BatchStats& other);

 private:
  void require_group(int size, const char* name) const;

  Phase phase_ = Phase::initial;
  int p_ = 0;
  int q_ = 0;
  int r_ = 0;
  std::int64_t n_ = 0;
  Mat gram_;
  Vec cross_;
  double yty_ = 0.0;
};

// Exact cross-products of a raw batch. Throws EmptyBatch, DimensionMismatch,
// or FormatError for non-finite cells.
BatchStats compress_batch(const RawBatch& batch, const StreamSchema& schema);

// Blockwise sum. Throws SchemaMismatch when dims or phases differ.
BatchStats merge(const BatchStats& a, const BatchStats& b);

}  // namespace hetstream
