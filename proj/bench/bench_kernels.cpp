// Serial reference vs OpenMP kernels.
#include <benchmark/benchmark.h>

#include <vector>

#include "mgcat/kernels.hpp"
#include "mgcat/rng.hpp"
#include "mgcat/roadnet.hpp"
#include "mgcat/synthgen.hpp"

namespace {

using namespace mgcat;

std::vector<double> random_matrix(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n * n, 1);
  const auto b = random_matrix(n * n, 2);
  std::vector<double> c(n * n);
  const kernels::GemmShape s{n, n, n, false, false};
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::omp::gemm(s, a.data(), b.data(), c.data(), false);
    else
      kernels::serial::gemm(s, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(128)->Arg(256);

template <Exec E>
void BM_ViewGraphs(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto net = gen_grid_network(side, side, 100.0);
  GenConfig g;
  g.rows = g.cols = side;
  g.count = 200;
  g.seed = 3;
  const auto trajs = gen_trajectories(net, g);
  const auto stats = build_transition_stats(trajs, net);
  const auto pairs = build_pair_set(net, trajs, 4);
  ViewBuildOptions opt;
  opt.seed = 11;
  opt.exec = E;
  for (auto _ : state) {
    auto views = build_view_graphs(net, stats, pairs, opt);
    benchmark::DoNotOptimize(views.first.rows.data());
  }
  state.counters["pairs"] = static_cast<double>(pairs.size());
}
BENCHMARK(BM_ViewGraphs<Exec::serial>)->Name("view_graphs/serial")->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ViewGraphs<Exec::parallel>)->Name("view_graphs/omp")->Arg(8)->Arg(12)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
