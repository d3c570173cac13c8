#include <gtest/gtest.h>

#include <random>

#include "hetstream/batch_stats.hpp"
#include "hetstream/error.hpp"
#include "hetstream/linalg.hpp"

using namespace hetstream;

namespace {

RawBatch random_batch(std::mt19937_64& rng, int n, int p, int q, int r) {
  std::normal_distribution<double> normal;
  auto fill = [&](int rows, int cols) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
  };
  RawBatch b;
  b.x = fill(n, p);
  if (q > 0) b.z = fill(n, q);
  if (r > 0) b.w = fill(n, r);
  b.y = fill(n, 1).col(0);
  return b;
}

RawBatch rows(const RawBatch& b, int start, int count) {
  RawBatch out;
  out.x = b.x.middleRows(start, count);
  if (b.z.cols() > 0) out.z = b.z.middleRows(start, count);
  if (b.w.cols() > 0) out.w = b.w.middleRows(start, count);
  out.y = b.y.segment(start, count);
  return out;
}

}  // namespace

TEST(Schema, Validation) {
  EXPECT_NO_THROW(StreamSchema::with_default_names(2, 1, 0).validate());
  EXPECT_THROW((StreamSchema{0, 1, 0, {}}).validate(), InvalidSchema);
  EXPECT_THROW((StreamSchema{1, -1, 0, {}}).validate(), InvalidSchema);
  EXPECT_THROW((StreamSchema{1, 0, 1, {}}).validate(), InvalidSchema);
  EXPECT_THROW((StreamSchema{2, 0, 0, {"a", "a"}}).validate(), InvalidSchema);
  EXPECT_THROW((StreamSchema{2, 0, 0, {"a"}}).validate(), InvalidSchema);
  const auto s = StreamSchema::with_default_names(2, 1, 1);
  EXPECT_EQ(s.names, (std::vector<std::string>{"x1", "x2", "z1", "w1"}));
  EXPECT_EQ(s.observed_dim(Phase::updated), 3);
}

TEST(CompressBatch, HandExample) {
  const auto schema = StreamSchema::with_default_names(1, 0, 0);
  RawBatch b;
  b.x = Mat(2, 1);
  b.x << 1, -1;
  b.y = Vec(2);
  b.y << 2, -2;
  const auto s = compress_batch(b, schema);
  EXPECT_EQ(s.n(), 2);
  EXPECT_DOUBLE_EQ(s.xtx()(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(s.xty()(0), 4.0);
  EXPECT_DOUBLE_EQ(s.yty(), 8.0);
  EXPECT_EQ(s.phase(), Phase::initial);
  EXPECT_THROW(s.xtz(), SchemaMismatch);
}

TEST(CompressBatch, OrthogonalRows) {
  const auto schema = StreamSchema::with_default_names(1, 1, 0);
  RawBatch b;
  b.x = Mat(2, 1);
  b.x << 1, 0;
  b.z = Mat(2, 1);
  b.z << 0, 1;
  b.y = Vec::Ones(2);
  const auto s = compress_batch(b, schema);
  EXPECT_DOUBLE_EQ(s.xtz()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(s.zty()(0), 1.0);
}

TEST(CompressBatch, BlocksMatchDenseProducts) {
  std::mt19937_64 rng(1);
  const auto schema = StreamSchema::with_default_names(3, 2, 2);
  const RawBatch b = random_batch(rng, 50, 3, 2, 2);
  const auto s = compress_batch(b, schema);
  auto close = [](const Mat& a, const Mat& e) { return (a - e).norm() <= 1e-12 * (1 + e.norm()); };
  EXPECT_TRUE(close(s.xtx(), b.x.transpose() * b.x));
  EXPECT_TRUE(close(s.xtz(), b.x.transpose() * b.z));
  EXPECT_TRUE(close(s.ztz(), b.z.transpose() * b.z));
  EXPECT_TRUE(close(s.xtw(), b.x.transpose() * b.w));
  EXPECT_TRUE(close(s.ztw(), b.z.transpose() * b.w));
  EXPECT_TRUE(close(s.wtw(), b.w.transpose() * b.w));
  EXPECT_TRUE(close(s.xty(), b.x.transpose() * b.y));
  EXPECT_TRUE(close(s.zty(), b.z.transpose() * b.y));
  EXPECT_TRUE(close(s.wty(), b.w.transpose() * b.y));
  EXPECT_NEAR(s.yty(), b.y.squaredNorm(), 1e-12 * b.y.squaredNorm());
  EXPECT_EQ(s.gram(), s.gram().transpose());
}

TEST(CompressBatch, Errors) {
  const auto schema = StreamSchema::with_default_names(2, 1, 0);
  RawBatch empty;
  empty.x = Mat(0, 2);
  empty.y = Vec(0);
  EXPECT_THROW(compress_batch(empty, schema), EmptyBatch);

  std::mt19937_64 rng(2);
  RawBatch b = random_batch(rng, 5, 3, 0, 0);
  EXPECT_THROW(compress_batch(b, schema), DimensionMismatch);
  b = random_batch(rng, 5, 2, 1, 0);
  b.y = Vec::Ones(4);
  EXPECT_THROW(compress_batch(b, schema), DimensionMismatch);
  b = random_batch(rng, 5, 2, 1, 0);
  b.x(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(compress_batch(b, schema), FormatError);
}

TEST(CompressBatch, AcceptsBatchSmallerThanDimension) {
  std::mt19937_64 rng(4);
  const auto schema = StreamSchema::with_default_names(4, 2, 0);
  EXPECT_EQ(compress_batch(random_batch(rng, 1, 4, 2, 0), schema).n(), 1);
}

TEST(Merge, IdentityCommutativityAndSplit) {
  std::mt19937_64 rng(9);
  const auto schema = StreamSchema::with_default_names(3, 2, 0);
  const RawBatch whole = random_batch(rng, 40, 3, 2, 0);
  const auto s = compress_batch(whole, schema);
  const auto zero = BatchStats::zero(schema, Phase::updated);
  const auto sz = merge(s, zero);
  EXPECT_EQ(sz.gram(), s.gram());
  EXPECT_EQ(sz.n(), s.n());

  for (int cut = 1; cut < 40; cut += 7) {
    const auto a = compress_batch(rows(whole, 0, cut), schema);
    const auto b = compress_batch(rows(whole, cut, 40 - cut), schema);
    const auto ab = merge(a, b);
    const auto ba = merge(b, a);
    EXPECT_EQ(ab.gram(), ba.gram());
    EXPECT_EQ(ab.n(), 40);
    EXPECT_LE((ab.gram() - s.gram()).norm(), 1e-10 * s.gram().norm());
    EXPECT_LE((ab.cross() - s.cross()).norm(), 1e-10 * s.cross().norm());
    EXPECT_NEAR(ab.yty(), s.yty(), 1e-10 * s.yty());
  }
}

TEST(Merge, ShapeMismatch) {
  std::mt19937_64 rng(10);
  const auto schema = StreamSchema::with_default_names(2, 1, 0);
  const auto pre = compress_batch(random_batch(rng, 5, 2, 0, 0), schema);
  const auto post = compress_batch(random_batch(rng, 5, 2, 1, 0), schema);
  EXPECT_THROW(merge(pre, post), SchemaMismatch);
}

TEST(BatchStats, GramIsNonNegativeDefinite) {
  std::mt19937_64 rng(12);
  const auto schema = StreamSchema::with_default_names(4, 2, 1);
  for (int t = 0; t < 50; ++t) {
    const auto s = compress_batch(random_batch(rng, 1 + t % 10, 4, 2, 1), schema);
    Eigen::SelfAdjointEigenSolver<Mat> eig(s.gram());
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10 * (1 + s.gram().norm()));
  }
}

TEST(BatchStats, SufficientForBatchOls) {
  std::mt19937_64 rng(13);
  const auto schema = StreamSchema::with_default_names(3, 2, 0);
  for (int t = 0; t < 30; ++t) {
    const RawBatch b = random_batch(rng, 20, 3, 2, 0);
    const auto s = compress_batch(b, schema);
    Mat u(20, 5);
    u << b.x, b.z;
    const Vec raw = u.colPivHouseholderQr().solve(b.y);
    const Vec from_stats = linalg::solve_spd(s.gram(), s.cross());
    EXPECT_LE((raw - from_stats).norm(), 1e-8 * raw.norm());
  }
}
