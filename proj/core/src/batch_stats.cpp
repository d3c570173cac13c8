#include "hetstream/batch_stats.hpp"

#include <set>
#include <string>

#include "hetstream/error.hpp"

namespace hetstream {

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::initial:
      return "initial";
    case Phase::updated:
      return "updated";
    case Phase::twice_updated:
      return "twice-updated";
  }
  return "unknown";
}

StreamSchema StreamSchema::with_default_names(int p, int q, int r) {
  StreamSchema s{p, q, r, {}};
  for (int i = 1; i <= p; ++i) s.names.push_back("x" + std::to_string(i));
  for (int i = 1; i <= q; ++i) s.names.push_back("z" + std::to_string(i));
  for (int i = 1; i <= r; ++i) s.names.push_back("w" + std::to_string(i));
  return s;
}

void StreamSchema::validate() const {
  if (p < 1) throw InvalidSchema("schema: p must be at least 1, got " + std::to_string(p));
  if (q < 0 || r < 0) throw InvalidSchema("schema: q and r must be non-negative");
  if (q == 0 && r > 0) throw InvalidSchema("schema: w covariates require z covariates");
  if (!names.empty()) {
    if (names.size() != static_cast<std::size_t>(p + q + r)) {
      throw InvalidSchema("schema: expected " + std::to_string(p + q + r) + " names, got " +
                          std::to_string(names.size()));
    }
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty() || n.find_first_of(" \t\r\n,") != std::string::npos) {
        throw InvalidSchema("schema: column name '" + n + "' is empty or contains a separator");
      }
      if (!seen.insert(n).second) throw InvalidSchema("schema: duplicate column name '" + n + "'");
    }
  }
}

int StreamSchema::observed_dim(Phase phase) const {
  switch (phase) {
    case Phase::initial:
      return p;
    case Phase::updated:
      return p + q;
    case Phase::twice_updated:
      return p + q + r;
  }
  return p;
}

Phase RawBatch::phase() const {
  if (w.cols() > 0) return Phase::twice_updated;
  if (z.cols() > 0) return Phase::updated;
  return Phase::initial;
}

BatchStats BatchStats::zero(const StreamSchema& schema, Phase phase) {
  schema.validate();
  BatchStats s;
  s.phase_ = phase;
  s.p_ = schema.p;
  s.q_ = phase == Phase::initial ? 0 : schema.q;
  s.r_ = phase == Phase::twice_updated ? schema.r : 0;
  const int d = s.p_ + s.q_ + s.r_;
  s.gram_ = Mat::Zero(d, d);
  s.cross_ = Vec::Zero(d);
  return s;
}

BatchStats BatchStats::from_moments(const StreamSchema& schema, Phase phase, std::int64_t n,
                                    Mat gram, Vec cross, double yty) {
  BatchStats s = zero(schema, phase);
  if (gram.rows() != s.gram_.rows() || gram.cols() != s.gram_.cols() ||
      cross.size() != s.cross_.size()) {
    throw DimensionMismatch("batch stats: moment blocks do not match the schema");
  }
  if (n < 0) throw DimensionMismatch("batch stats: negative count");
  s.n_ = n;
  s.gram_ = std::move(gram);
  s.cross_ = std::move(cross);
  s.yty_ = yty;
  return s;
}

void BatchStats::require_group(int size, const char* name) const {
  if (size == 0) {
    throw SchemaMismatch(std::string("batch stats: ") + name + " block not observed in phase " +
                         to_string(phase_));
  }
}

Mat BatchStats::xtx() const { return gram_.topLeftCorner(p_, p_); }
Vec BatchStats::xty() const { return cross_.head(p_); }

Mat BatchStats::xtz() const {
  require_group(q_, "z");
  return gram_.block(0, p_, p_, q_);
}
Mat BatchStats::ztz() const {
  require_group(q_, "z");
  return gram_.block(p_, p_, q_, q_);
}
Vec BatchStats::zty() const {
  require_group(q_, "z");
  return cross_.segment(p_, q_);
}
Mat BatchStats::xtw() const {
  require_group(r_, "w");
  return gram_.block(0, p_ + q_, p_, r_);
}
Mat BatchStats::ztw() const {
  require_group(r_, "w");
  return gram_.block(p_, p_ + q_, q_, r_);
}
Mat BatchStats::wtw() const {
  require_group(r_, "w");
  return gram_.block(p_ + q_, p_ + q_, r_, r_);
}
Vec BatchStats::wty() const {
  require_group(r_, "w");
  return cross_.segment(p_ + q_, r_);
}

bool BatchStats::phase_matches_schema(const StreamSchema& schema) const {
  return p_ == schema.p && q_ == (phase_ == Phase::initial ? 0 : schema.q) &&
         r_ == (phase_ == Phase::twice_updated ? schema.r : 0);
}

BatchStats& BatchStats::operator+=(const BatchStats& other) {
  if (phase_ != other.phase_ || p_ != other.p_ || q_ != other.q_ || r_ != other.r_) {
    throw SchemaMismatch(std::string("merge: cannot combine ") + to_string(phase_) + " and " +
                         to_string(other.phase_) + " statistics of different shape");
  }
  n_ += other.n_;
  gram_ += other.gram_;
  cross_ += other.cross_;
  yty_ += other.yty_;
  return *this;
}

BatchStats compress_batch(const RawBatch& batch, const StreamSchema& schema) {
  schema.validate();
  const Eigen::Index n = batch.rows();
  if (n < 1) throw EmptyBatch("compress_batch: batch has no observations");

  const Phase phase = batch.phase();
  auto check = [&](const Mat& m, int cols, const char* name) {
    if (m.cols() == 0) return;
    if (m.cols() != cols || m.rows() != n) {
      throw DimensionMismatch(std::string("compress_batch: ") + name + " block is " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", expected " + std::to_string(n) + "x" + std::to_string(cols));
    }
    if (!m.allFinite()) {
      throw FormatError(std::string("compress_batch: missing or non-finite value in ") + name);
    }
  };
  if (batch.x.cols() == 0) throw DimensionMismatch("compress_batch: x block is required");
  check(batch.x, schema.p, "x");
  check(batch.z, schema.q, "z");
  check(batch.w, schema.r, "w");
  if (batch.w.cols() > 0 && batch.z.cols() == 0) {
    throw DimensionMismatch("compress_batch: w observed without z");
  }
  if (!batch.y.allFinite()) throw FormatError("compress_batch: missing or non-finite response");

  BatchStats zero = BatchStats::zero(schema, phase);
  const int d = zero.dim();
  Mat u(n, d);
  u.leftCols(schema.p) = batch.x;
  if (phase != Phase::initial) u.middleCols(schema.p, schema.q) = batch.z;
  if (phase == Phase::twice_updated) u.rightCols(schema.r) = batch.w;

  Mat gram = Mat::Zero(d, d);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(u.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  return BatchStats::from_moments(schema, phase, n, std::move(gram), u.transpose() * batch.y,
                                  batch.y.squaredNorm());
}

BatchStats merge(const BatchStats& a, const BatchStats& b) {
  BatchStats out = a;
  out += b;
  return out;
}

}  // namespace hetstream
