#include <benchmark/benchmark.h>

#include <random>

#include "hetstream/inference.hpp"
#include "hetstream/simlab.hpp"
#include "hetstream/stream_engine.hpp"

using namespace hetstream;

namespace {

RawBatch make_batch(std::mt19937_64& rng, int n, int p, int q) {
  std::normal_distribution<double> g;
  RawBatch b;
  b.x = Mat::NullaryExpr(n, p, [&] { return g(rng); });
  if (q > 0) b.z = Mat::NullaryExpr(n, q, [&] { return g(rng); });
  b.y = Vec::NullaryExpr(n, [&] { return g(rng); });
  return b;
}

void BM_CompressBatch(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto schema = StreamSchema::with_default_names(5, 2, 0);
  std::mt19937_64 rng(1);
  const RawBatch b = make_batch(rng, n, 5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(compress_batch(b, schema));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_CompressBatch)->Arg(100)->Arg(1000)->Arg(10000);

// Ingest of one post-change batch, including the fit and SSE refresh.
void BM_IngestPostChange(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const int q = 2;
  const auto schema = StreamSchema::with_default_names(p, q, 0);
  std::mt19937_64 rng(2);
  auto s = new_stream(schema);
  s.ingest_pre_change(compress_batch(make_batch(rng, 200, p, 0), schema));
  s.begin_update_phase(compress_batch(make_batch(rng, 200, p, q), schema));
  const BatchStats next = compress_batch(make_batch(rng, 100, p, q), schema);
  for (auto _ : state) s.ingest_post_change(next);
}
BENCHMARK(BM_IngestPostChange)->Arg(2)->Arg(5)->Arg(20);

void BM_Estimate(benchmark::State& state) {
  const int p = static_cast<int>(state.range(0));
  const auto schema = StreamSchema::with_default_names(p, 2, 0);
  std::mt19937_64 rng(3);
  auto s = new_stream(schema);
  s.ingest_pre_change(compress_batch(make_batch(rng, 200, p, 0), schema));
  s.begin_update_phase(compress_batch(make_batch(rng, 200, p, 2), schema));
  for (auto _ : state) benchmark::DoNotOptimize(s.estimate());
}
BENCHMARK(BM_Estimate)->Arg(2)->Arg(5)->Arg(20);

void BM_FQuantile(benchmark::State& state) {
  const double d2 = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(f_quantile(0.95, 2, d2));
}
BENCHMARK(BM_FQuantile)->Arg(10)->Arg(1000)->Arg(100000);

// One Monte Carlo replicate of the Example 1 setting (AUE, NUE and AVE).
void BM_Replicate(benchmark::State& state) {
  SimConfig c = preset("ex1a-correlated", 100);
  c.replications = 1;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    c.seed = ++seed;
    benchmark::DoNotOptimize(run_bias_mse(c, 1));
  }
}
BENCHMARK(BM_Replicate);

}  // namespace
BENCHMARK_MAIN();
