#pragma once

// Monte Carlo harness: batch streams drawn from the true model, the
// homogenized estimator (AUE) driven alongside NUE and AVE, and bias, MSE and
// rejection-rate summaries at chosen checkpoints.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hetstream/baselines.hpp"
#include "hetstream/batch_stats.hpp"
#include "hetstream/inference.hpp"
#include "hetstream/stream_engine.hpp"

namespace hetstream {

// uncorrelated zeroes the cross blocks of the AR(1) covariance and gives the
// estimator zero projection maps; correlated keeps the full AR(1) matrix.
enum class CorrCase { uncorrelated, correlated };

// estimated: initial choices from the first post-change batch.
// true: the generating σ², coefficients and covariance block.
enum class SimWeights { estimated, truth };

const char* to_string(CorrCase c);
const char* to_string(SimWeights w);

struct SimConfig {
  Vec beta;
  Vec theta;
  Vec gamma;
  double sigma_sq = 1.0;
  CorrCase corr_case = CorrCase::correlated;
  double rho_base = 0.5;
  int n = 100;
  // z is observed from batch k+1; w from batch k+m+1 when gamma is set.
  int k = 10;
  int m = 0;
  int j_max = 20;
  int replications = 500;
  std::uint64_t seed = 1;
  // θ used for data generation is a·theta.
  double a = 1.0;
  std::vector<int> checkpoints;
  double alpha = 0.05;
  WeightConvention convention = WeightConvention::gram_squared;
  SimWeights weights = SimWeights::estimated;
  // Presets use refined maps; see README for why.
  ProjectionMode projection = ProjectionMode::frozen;

  int p() const { return static_cast<int>(beta.size()); }
  int q() const { return static_cast<int>(theta.size()); }
  int r() const { return static_cast<int>(gamma.size()); }
  StreamSchema schema() const;
  Mat covariance() const;
  Vec true_coefficients() const;
  // Throws InvalidConfig naming the offending field.
  void validate() const;
};

// Draws batches of one replicate in order. Replicate streams come from
// independent generators derived from (seed, replicate).
class StreamGenerator {
 public:
  StreamGenerator(const SimConfig& config, std::uint64_t replicate);
  // 1-based index of the batch the next call returns.
  int next_index() const { return next_; }
  RawBatch next();

 private:
  const SimConfig& config_;
  Mat chol_;
  Vec coef_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  int next_ = 1;
};

std::vector<RawBatch> gen_stream(const SimConfig& config, std::uint64_t replicate);

// Seed of replicate `replicate`'s generator.
std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate);

// Estimates of one replicate at one checkpoint.
struct CheckpointRecord {
  int checkpoint = 0;
  EstimateReport aue;
  EstimateReport nue;
  EstimateReport ave;
  std::optional<TestReport> aue_test;
  std::optional<TestReport> nue_test;
};

struct ReplicateRecord {
  std::uint64_t replicate = 0;
  std::vector<CheckpointRecord> checkpoints;
};

struct RunOptions {
  // 0 picks worker_threads().
  int threads = 0;
  bool run_tests = false;
  bool run_ave = true;
};

// Every replicate, in replicate order. Throws ReplicateFailure carrying the
// lowest failing replicate index.
std::vector<ReplicateRecord> run_replicates(const SimConfig& config, const RunOptions& options = {});

struct MetricRow {
  std::string method;
  int checkpoint = 0;
  std::string metric;
  double value = 0.0;
};

struct SimResult {
  std::vector<MetricRow> rows;
  double runtime_seconds = 0.0;

  // Throws std::out_of_range when absent.
  double value(const std::string& method, int checkpoint, const std::string& metric) const;
  void write_csv(std::ostream& out) const;
};

// bias_<g> = |mean error|₁/dim and MSE_<g> = mean ‖error‖²/dim for each
// group g in {beta, theta, gamma} observed at the checkpoint, plus
// MSE_<g>_se, the Monte Carlo standard error of MSE_<g>.
SimResult run_bias_mse(const SimConfig& config, int threads = 0);

// Rejection rate of the θ = 0 test for AUE and NUE at every checkpoint in
// the first-update phase, with its standard error. A non-empty a_grid
// repeats the run per a and tags the method as e.g. "AUE[a=0.5]".
SimResult run_power(const SimConfig& config, const std::vector<double>& a_grid = {},
                    int threads = 0);

// HETSTREAM_THREADS if set to a positive integer, else the hardware count.
int worker_threads();

// Flat `key = value` config; keys mirror SimConfig fields. Vectors are
// comma separated. `#` starts a comment.
SimConfig parse_sim_config(std::istream& in);
SimConfig load_sim_config(const std::string& path);
void write_sim_config(const SimConfig& config, std::ostream& out);

// Named settings of the simulation study: "ex1a-uncorrelated",
// "ex1b-correlated", "ex2", "ex3", "ex4", ...
SimConfig preset(const std::string& name, int n = 100);
std::vector<std::string> preset_names();

}  // namespace hetstream
