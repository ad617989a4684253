#include <random>

#include <benchmark/benchmark.h>

#include "oranlb/simulator.hpp"
#include "oranlb/stability.hpp"
#include "oranlb/sysid.hpp"

using namespace oranlb;

static void BM_SparseRegress(benchmark::State& state) {
  const auto m = state.range(0);
  const Eigen::Index p = 10;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd th(m, p);
  for (Eigen::Index k = 0; k < m; ++k)
    for (Eigen::Index c = 0; c < p; ++c) th(k, c) = n(rng);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
  w(0) = 1.2;
  w(3) = -0.5;
  const Eigen::VectorXd y = th * w + 0.1 * Eigen::VectorXd::NullaryExpr(m, [&] { return n(rng); });
  const double g = 0.01 * gamma_max(th, y);
  for (auto _ : state) benchmark::DoNotOptimize(sparse_regress(th, y, g));
  state.SetItemsProcessed(state.iterations() * m);
}
BENCHMARK(BM_SparseRegress)->Arg(500)->Arg(2000)->Arg(10000);

static void BM_SimulatorStep(benchmark::State& state) {
  const auto cfg = default_scenario();
  auto s = initial_state(cfg);
  for (int k = 0; k < 200; ++k) step(s, cfg);
  for (auto _ : state) {
    auto copy = s;
    benchmark::DoNotOptimize(step(copy, cfg));
  }
}
BENCHMARK(BM_SimulatorStep);

static void BM_RunScenario(benchmark::State& state) {
  auto cfg = asymmetric_cycle_scenario();
  cfg.steps = state.range(0);
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RunScenario)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_IdentifyNetwork(benchmark::State& state) {
  const auto cfg = default_scenario();
  const auto run = run_scenario(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(identify_network(run.series, cfg.topology, LibrarySpec{}));
}
BENCHMARK(BM_IdentifyNetwork)->Unit(benchmark::kMillisecond);

static void BM_MaxEigenvalue(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) K(i, j) = K(j, i) = u(rng);
  const bool symmetric = state.range(1) != 0;
  if (!symmetric) K(0, n - 1) += 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(max_eigenvalue(K));
}
BENCHMARK(BM_MaxEigenvalue)->Args({12, 1})->Args({12, 0})->Args({100, 1})->Args({100, 0});

BENCHMARK_MAIN();
