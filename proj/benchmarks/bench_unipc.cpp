#include <benchmark/benchmark.h>

#include <vector>

#include "unipc/coeffs.hpp"
#include "unipc/rng.hpp"
#include "unipc/solver.hpp"
#include "unipc/study.hpp"

using namespace unipc;

static void BM_Varphi(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  double h = 0.01;
  for (auto _ : state) {
    benchmark::DoNotOptimize(varphi(k, h));
    h = h < 3.0 ? h * 1.5 : 0.01;
  }
}
BENCHMARK(BM_Varphi)->DenseRange(1, 6);

static void BM_SolveWeights(benchmark::State& state) {
  const auto p = static_cast<std::size_t>(state.range(0));
  std::vector<double> r;
  for (std::size_t m = p - 1; m >= 1; --m) r.push_back(-static_cast<double>(m));
  r.push_back(1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_weights(r, 0.1, Bh::b1, Prediction::noise));
  }
}
BENCHMARK(BM_SolveWeights)->DenseRange(1, 5);

static void BM_Sample(benchmark::State& state) {
  const auto sched = NoiseSchedule::vp_linear();
  const auto eval = make_evaluator(SyntheticModel::linear_in_x(0.3, 64), sched);
  const auto grid = make_time_grid(sched, static_cast<std::size_t>(state.range(0)));
  const auto x_T = gaussian_vector(42, 64);
  SolverConfig cfg;
  cfg.order = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample(eval, sched, grid, cfg, x_T));
  }
}
BENCHMARK(BM_Sample)->ArgsProduct({{10, 100}, {1, 2, 3}});

static void BM_ReferenceRk4(benchmark::State& state) {
  const auto sched = NoiseSchedule::vp_linear();
  const auto model = SyntheticModel::linear_in_x(0.3, 4);
  const auto x_T = gaussian_vector(42, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        reference_solution(model, sched, x_T, sched.t_start(), sched.t_end(), ReferenceMode::fine_rk4));
  }
}
BENCHMARK(BM_ReferenceRk4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
