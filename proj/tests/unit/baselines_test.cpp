#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "hetstream/baselines.hpp"
#include "hetstream/error.hpp"
#include "oracle.hpp"

using namespace hetstream;
using oracle::rel_err;

namespace {

RawBatch batch(std::mt19937_64& rng, int n, int p, int q, bool with_z, double noise = 1.0) {
  std::normal_distribution<double> normal;
  Mat u(n, p + q);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < p + q; ++c) u(i, c) = normal(rng);
  RawBatch b;
  b.x = u.leftCols(p);
  if (with_z) b.z = u.rightCols(q);
  b.y = u * Vec::LinSpaced(p + q, 1.0, -1.0);
  for (int i = 0; i < n; ++i) b.y(i) += noise * normal(rng);
  return b;
}

Vec batch_ols(const RawBatch& b) {
  Mat u(b.rows(), b.x.cols() + b.z.cols());
  u << b.x, b.z;
  return *oracle::least_squares(u, b.y);
}

}  // namespace

TEST(Nue, SegmentOlsAndReset) {
  std::mt19937_64 rng(71);
  const auto schema = StreamSchema::with_default_names(3, 2, 0);
  NueEstimator nue(schema);
  EXPECT_THROW(nue.estimate(), InsufficientData);
  oracle::Rows pre;
  for (int i = 0; i < 3; ++i) {
    const RawBatch b = batch(rng, 10, 3, 2, false);
    pre.append(b);
    nue.ingest(compress_batch(b, schema));
  }
  EXPECT_LE(rel_err(nue.estimate().beta, *oracle::least_squares(pre.x, pre.y)), 1e-10);
  EXPECT_FALSE(nue.estimate().theta.has_value());

  const RawBatch first = batch(rng, 12, 3, 2, true);
  nue.ingest(compress_batch(first, schema));
  EXPECT_EQ(nue.phase(), Phase::updated);
  EXPECT_EQ(nue.segment_batches(), 1);
  EXPECT_LE(rel_err(nue.estimate().stacked(), batch_ols(first)), 1e-10);

  oracle::Rows post;
  post.append(first);
  for (int i = 0; i < 4; ++i) {
    const RawBatch b = batch(rng, 4 + i, 3, 2, true);
    post.append(b);
    nue.ingest(compress_batch(b, schema));
  }
  Mat u(post.n(), 5);
  u << post.x, post.z;
  EXPECT_LE(rel_err(nue.estimate().stacked(), *oracle::least_squares(u, post.y)), 1e-10);
  EXPECT_THROW(nue.ingest(compress_batch(batch(rng, 10, 3, 2, false), schema)), PhaseMismatch);
}

TEST(Nue, OrderInvariance) {
  std::mt19937_64 rng(72);
  const auto schema = StreamSchema::with_default_names(2, 1, 0);
  std::vector<BatchStats> stats;
  for (int i = 0; i < 6; ++i) stats.push_back(compress_batch(batch(rng, 3 + i, 2, 1, true), schema));
  NueEstimator a(schema), b(schema);
  for (const auto& s : stats) a.ingest(s);
  std::reverse(stats.begin(), stats.end());
  for (const auto& s : stats) b.ingest(s);
  EXPECT_LE(rel_err(a.estimate().stacked(), b.estimate().stacked()), 1e-10);
}

TEST(Nue, PartialFTest) {
  std::mt19937_64 rng(73);
  const auto schema = StreamSchema::with_default_names(2, 2, 0);
  NueEstimator nue(schema);
  EXPECT_THROW(nue.test_theta_zero(0.05), PhaseMismatch);
  const RawBatch b = batch(rng, 40, 2, 2, true);
  nue.ingest(compress_batch(b, schema));
  const auto rep = nue.test_theta_zero(0.05);
  // Classical partial F from raw rows.
  Mat u(40, 4);
  u << b.x, b.z;
  const double sse_full = (b.y - u * batch_ols(b)).squaredNorm();
  const double sse_x = (b.y - b.x * (*oracle::least_squares(b.x, b.y))).squaredNorm();
  const double f = ((sse_x - sse_full) / 2) / (sse_full / 36);
  EXPECT_NEAR(rep.f_value, f, 1e-9 * f);
  EXPECT_EQ(rep.df1, 2);
  EXPECT_EQ(rep.df2, 36);
  EXPECT_TRUE(rep.reject);
}

TEST(Ave, MeanOfBatchEstimates) {
  std::mt19937_64 rng(74);
  const auto schema = StreamSchema::with_default_names(2, 1, 0);
  AveEstimator ave(schema);
  EXPECT_THROW(ave.estimate(), InsufficientData);
  const RawBatch pre = batch(rng, 10, 2, 1, false);
  ave.ingest(compress_batch(pre, schema));
  EXPECT_LE(rel_err(ave.estimate().beta, *oracle::least_squares(pre.x, pre.y)), 1e-10);

  const RawBatch b1 = batch(rng, 10, 2, 1, true);
  const RawBatch b2 = batch(rng, 15, 2, 1, true);
  ave.ingest(compress_batch(b1, schema));
  ave.ingest(compress_batch(b2, schema));
  EXPECT_EQ(ave.count(), 2);
  EXPECT_LE(rel_err(ave.estimate().stacked(), 0.5 * (batch_ols(b1) + batch_ols(b2))), 1e-10);
}

TEST(Ave, IdenticalBatchesMatchNue) {
  std::mt19937_64 rng(75);
  const auto schema = StreamSchema::with_default_names(3, 2, 0);
  const auto s = compress_batch(batch(rng, 20, 3, 2, true), schema);
  AveEstimator ave(schema);
  NueEstimator nue(schema);
  for (int i = 0; i < 4; ++i) {
    ave.ingest(s);
    nue.ingest(s);
  }
  EXPECT_LE(rel_err(ave.estimate().stacked(), nue.estimate().stacked()), 1e-10);
}

TEST(Ave, SingularBatchFailsWithIndex) {
  std::mt19937_64 rng(76);
  const auto schema = StreamSchema::with_default_names(3, 2, 0);
  AveEstimator ave(schema);
  ave.ingest(compress_batch(batch(rng, 10, 3, 2, false), schema));
  ave.ingest(compress_batch(batch(rng, 10, 3, 2, true), schema));
  try {
    ave.ingest(compress_batch(batch(rng, 4, 3, 2, true), schema));
    FAIL() << "expected SingularBatch";
  } catch (const SingularBatch& e) {
    EXPECT_NE(std::string(e.what()).find("batch 3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(ave.count(), 1);
}
