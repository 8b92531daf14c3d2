#include <benchmark/benchmark.h>

#include <msmsharp/bootstrap.hpp>
#include <msmsharp/bounds.hpp>
#include <msmsharp/quantile_regression.hpp>
#include <msmsharp/random.hpp>

#include "test_support.hpp"

using namespace msmsharp;

static void BM_WeightedQuantileRegression(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(1);
  Eigen::MatrixXd g(n, 4);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    g(i, 0) = 1.0;
    for (int j = 1; j < 4; ++j) g(i, j) = rng.normal();
    y[i] = g.row(i).sum() + rng.normal();
    w[i] = rng.uniform(0.5, 3.0);
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_weighted_qr(g, y, w, 2.0 / 3.0).objective);
  state.SetComplexityN(n);
}
BENCHMARK(BM_WeightedQuantileRegression)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

static void BM_ZsbScan(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const Dataset ds = testing::random_dataset(2, n, 2);
  const auto e = testing::random_propensities(3, n);
  for (auto _ : state) benchmark::DoNotOptimize(zsb_bound(ds, e, 2.0, Estimand::psi_t, Direction::upper));
  state.SetComplexityN(n);
}
BENCHMARK(BM_ZsbScan)->RangeMultiplier(4)->Range(256, 65536)->Complexity();

static void BM_QuantileBalanceAte(benchmark::State& state) {
  const Dataset ds = testing::random_dataset(4, state.range(0), 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(sensitivity_interval(ds, 2.0, Estimand::ate, BoundsMethod::quantile_balance).upper);
}
BENCHMARK(BM_QuantileBalanceAte)->Arg(500)->Arg(5000);

static void BM_Bootstrap(benchmark::State& state) {
  const Dataset ds = testing::random_dataset(5, 500, 3);
  BootstrapConfig cfg;
  cfg.B = static_cast<int>(state.range(0));
  cfg.threads = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        percentile_bootstrap_ci(ds, 2.0, Estimand::ate, BoundsMethod::quantile_balance, cfg).ci_upper);
}
BENCHMARK(BM_Bootstrap)->Arg(50)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
