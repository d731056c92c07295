#include <benchmark/benchmark.h>

#include <string>

#include "arbproj/entropic.hpp"
#include "arbproj/io.hpp"
#include "arbproj/lp.hpp"
#include "arbproj/repair.hpp"

using namespace arbproj;

namespace {

NormalizedSurface stressed(const char* surface, const char* scenario) {
  const std::string dir = ARBPROJ_FIXTURES_DIR;
  auto s = load_surface(dir + "/" + surface);
  return apply_stress(s, parse_scenario_json(read_file(dir + "/" + scenario), s.maturities()));
}

void BM_detect_m2(benchmark::State& state) {
  const auto s = stressed("desk_m2.csv", "calendar_flatten.json");
  for (auto _ : state) benchmark::DoNotOptimize(detect_arbitrage(s));
}
BENCHMARK(BM_detect_m2)->Unit(benchmark::kMillisecond);

void BM_lp_projection_m1(benchmark::State& state) {
  const auto pb = prepare_problem(stressed("desk_m1.csv", "atm_up20.json"), RepairConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(solve_p_prime(pb.distance, pb.nu, pb.system));
}
BENCHMARK(BM_lp_projection_m1)->Unit(benchmark::kMillisecond);

void BM_sinkhorn_m2(benchmark::State& state) {
  const auto pb = prepare_problem(stressed("desk_m2.csv", "joint_down20.json"), RepairConfig{});
  const auto kernel = gibbs_kernel(pb.distance, 1.0 / static_cast<double>(state.range(0)));
  SinkhornOptions opts;
  opts.e_tol = 1e-6;
  opts.record_history = false;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn_run(kernel, pb.system, pb.nu, opts));
}
BENCHMARK(BM_sinkhorn_m2)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_epsilon_sweep_m1(benchmark::State& state) {
  const auto pb = prepare_problem(stressed("desk_m1.csv", "atm_up30.json"), RepairConfig{});
  const std::vector<double> eps{1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01};
  SweepOptions opts;
  opts.e_tol = 1e-6;
  for (auto _ : state) benchmark::DoNotOptimize(epsilon_sweep(pb.distance, pb.nu, pb.system, eps, opts));
}
BENCHMARK(BM_epsilon_sweep_m1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
