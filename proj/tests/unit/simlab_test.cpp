#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "hetstream/error.hpp"
#include "hetstream/simlab.hpp"

using namespace hetstream;

namespace {

SimConfig small(CorrCase c) {
  SimConfig cfg = preset(c == CorrCase::correlated ? "ex1b-correlated" : "ex1b-uncorrelated", 40);
  cfg.replications = 20;
  cfg.k = 3;
  cfg.j_max = 6;
  cfg.checkpoints = {3, 5, 6};
  return cfg;
}

Mat rows_of(const std::vector<RawBatch>& batches, int cols) {
  Eigen::Index total = 0;
  for (const auto& b : batches) total += b.rows();
  Mat out(total, cols);
  Eigen::Index at = 0;
  for (const auto& b : batches) {
    Mat u(b.rows(), cols);
    u << b.x, b.z;
    out.middleRows(at, b.rows()) = u;
    at += b.rows();
  }
  return out;
}

}  // namespace

TEST(GenStream, DeterministicAndShaped) {
  SimConfig cfg = small(CorrCase::correlated);
  const auto a = gen_stream(cfg, 3);
  const auto b = gen_stream(cfg, 3);
  const auto c = gen_stream(cfg, 4);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
  }
  EXPECT_NE(a[0].x, c[0].x);
  EXPECT_EQ(a[2].z.cols(), 0);
  EXPECT_EQ(a[3].z.cols(), 2);
  EXPECT_EQ(a[3].x.rows(), 40);
}

TEST(GenStream, EmpiricalCovariance) {
  for (auto cc : {CorrCase::correlated, CorrCase::uncorrelated}) {
    SimConfig cfg = small(cc);
    cfg.k = 1;
    cfg.n = 10000;
    cfg.j_max = 11;
    cfg.checkpoints.clear();
    auto batches = gen_stream(cfg, 0);
    batches.erase(batches.begin());
    const Mat u = rows_of(batches, 7);
    const Mat emp = u.transpose() * u / static_cast<double>(u.rows());
    const Mat sigma = cfg.covariance();
    EXPECT_LT((emp - sigma).cwiseAbs().maxCoeff(), 0.02);
    if (cc == CorrCase::uncorrelated) {
      EXPECT_EQ(sigma.topRightCorner(5, 2).norm(), 0.0);
      EXPECT_LT(emp.topRightCorner(5, 2).cwiseAbs().maxCoeff(), 0.02);
    } else {
      EXPECT_DOUBLE_EQ(sigma(4, 5), 0.5);
    }
  }
}

TEST(GenStream, InvalidConfig) {
  SimConfig cfg = small(CorrCase::correlated);
  cfg.k = cfg.j_max;
  EXPECT_THROW(gen_stream(cfg, 0), InvalidConfig);
  cfg = small(CorrCase::correlated);
  cfg.sigma_sq = -1;
  EXPECT_THROW(cfg.validate(), InvalidConfig);
  cfg = small(CorrCase::correlated);
  cfg.theta.resize(0);
  EXPECT_THROW(cfg.validate(), InvalidConfig);
}

TEST(RunBiasMse, NoiselessIsZero) {
  SimConfig cfg = small(CorrCase::correlated);
  cfg.sigma_sq = 0.0;
  cfg.checkpoints = {5, 6};
  const auto res = run_bias_mse(cfg, 1);
  for (const char* m : {"AUE", "NUE", "AVE"}) {
    for (int j : {5, 6}) {
      EXPECT_LT(res.value(m, j, "MSE_theta"), 1e-20) << m;
      EXPECT_LT(res.value(m, j, "bias_theta"), 1e-10) << m;
      if (std::string(m) != "AUE") EXPECT_LT(res.value(m, j, "MSE_beta"), 1e-20) << m;
    }
  }
  // AUE also uses the pre-change rows, whose omitted-variable error is
  // suppressed by the near-infinite post-change weight.
  EXPECT_LT(res.value("AUE", 6, "MSE_beta"), 1e-12);
}

TEST(RunBiasMse, DeterministicAcrossThreadCounts) {
  SimConfig cfg = small(CorrCase::correlated);
  std::ostringstream a, b;
  run_bias_mse(cfg, 1).write_csv(a);
  run_bias_mse(cfg, 3).write_csv(b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("AUE,6,MSE_beta,"), std::string::npos);
}

TEST(RunBiasMse, MseDominatesSquaredBias) {
  const auto res = run_bias_mse(small(CorrCase::uncorrelated), 1);
  for (const auto& row : res.rows) {
    if (row.metric.rfind("bias_", 0) != 0) continue;
    const std::string g = row.metric.substr(5);
    const double mse = res.value(row.method, row.checkpoint, "MSE_" + g);
    // (|mean|₁/d)² ≤ mean‖e‖²/d by Cauchy–Schwarz and Jensen.
    EXPECT_LE(row.value * row.value, mse * (1 + 1e-12));
  }
}

TEST(RunBiasMse, ReplicateFailurePropagates) {
  SimConfig cfg = small(CorrCase::correlated);
  cfg.n = 4;  // below p + q: AVE cannot fit a post-change batch
  EXPECT_THROW(run_bias_mse(cfg, 1), ReplicateFailure);
  try {
    run_bias_mse(cfg, 1);
  } catch (const ReplicateFailure& e) {
    EXPECT_NE(std::string(e.what()).find("replicate 0"), std::string::npos) << e.what();
  }
}

TEST(RunPower, RatesAndLabels) {
  SimConfig cfg = preset("ex3", 50);
  cfg.replications = 20;
  cfg.k = 2;
  cfg.j_max = 4;
  cfg.checkpoints.clear();
  const auto res = run_power(cfg, {0.0, 1.0}, 1);
  for (int j : {3, 4}) {
    const double r0 = res.value("AUE[a=0]", j, "rejection_rate");
    const double r1 = res.value("AUE[a=1]", j, "rejection_rate");
    EXPECT_GE(r0, 0.0);
    EXPECT_LE(r0, 1.0);
    EXPECT_GT(r1, r0);
    const double nr = res.value("NUE[a=1]", j, "rejection_rate");
    EXPECT_NEAR(res.value("NUE[a=1]", j, "rejection_rate_se"), std::sqrt(nr * (1 - nr) / 20), 1e-15);
  }
}

TEST(Config, ParseRoundTripAndErrors) {
  std::istringstream in(
      "# example\nbeta = 1, -1\ntheta = 1\nsigma_sq = 2\nn = 100\nk = 10\nj_max = 20\n"
      "corr_case = uncorrelated\ncheckpoints = 12, 16, 20\nreplications = 50\nseed = 9\n");
  const SimConfig c = parse_sim_config(in);
  EXPECT_EQ(c.p(), 2);
  EXPECT_EQ(c.corr_case, CorrCase::uncorrelated);
  EXPECT_EQ(c.checkpoints, (std::vector<int>{12, 16, 20}));
  EXPECT_EQ(c.seed, 9u);
  std::ostringstream out;
  write_sim_config(c, out);
  std::istringstream back(out.str());
  const SimConfig d = parse_sim_config(back);
  EXPECT_EQ(d.beta, c.beta);
  EXPECT_EQ(d.checkpoints, c.checkpoints);
  EXPECT_EQ(d.replications, 50);

  std::istringstream missing("beta = 1\ntheta = 1\nsigma_sq = 1\nk = 1\nj_max = 3\n");
  try {
    parse_sim_config(missing);
    FAIL();
  } catch (const InvalidConfig& e) {
    EXPECT_NE(std::string(e.what()).find("'n'"), std::string::npos);
  }
  std::istringstream unknown("bogus = 1\n");
  EXPECT_THROW(parse_sim_config(unknown), InvalidConfig);
  std::istringstream bad("beta = 1, x\ntheta = 1\nsigma_sq = 1\nn = 2\nk = 1\nj_max = 3\n");
  EXPECT_THROW(parse_sim_config(bad), InvalidConfig);
  std::istringstream dims("p = 3\nbeta = 1\ntheta = 1\nsigma_sq = 1\nn = 2\nk = 1\nj_max = 3\n");
  EXPECT_THROW(parse_sim_config(dims), InvalidConfig);
}

TEST(Presets, AllValid) {
  for (const auto& name : preset_names()) EXPECT_NO_THROW(preset(name));
  EXPECT_THROW(preset("nope"), InvalidConfig);
  const auto ex4 = preset("ex4-s2");
  EXPECT_EQ(ex4.r(), 2);
  EXPECT_EQ(ex4.m, 10);
}

TEST(Threads, EnvironmentOverride) {
  setenv("HETSTREAM_THREADS", "3", 1);
  EXPECT_EQ(worker_threads(), 3);
  setenv("HETSTREAM_THREADS", "junk", 1);
  EXPECT_GE(worker_threads(), 1);
  unsetenv("HETSTREAM_THREADS");
}
