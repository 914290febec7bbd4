#include <benchmark/benchmark.h>

#include "vrpflow/decomposition.hpp"
#include "vrpflow/hgs.hpp"
#include "vrpflow/io.hpp"
#include "vrpflow/policy.hpp"
#include "vrpflow/rollout.hpp"
#include "vrpflow/sparse_graph.hpp"

namespace {

using namespace vrpflow;

struct Fixture {
  Instance inst;
  DistanceMatrix dm;
  nn::GraphInput g;

  explicit Fixture(std::size_t n)
      : inst(io::generate_uniform(n, 42)),
        dm(build_distance_matrix(inst)),
        g(nn::build_graph_input(inst, dm, knn_sparsify(dm, default_knn(n + 1)))) {}
};

void BM_DistanceMatrix(benchmark::State& state) {
  const Instance inst = io::generate_uniform(state.range(0), 42);
  for (auto _ : state) benchmark::DoNotOptimize(build_distance_matrix(inst));
}
BENCHMARK(BM_DistanceMatrix)->Arg(100)->Arg(500);

void BM_KnnSparsify(benchmark::State& state) {
  const std::size_t n = state.range(0);
  const Instance inst = io::generate_uniform(n, 42);
  const DistanceMatrix dm = build_distance_matrix(inst);
  for (auto _ : state) benchmark::DoNotOptimize(knn_sparsify(dm, default_knn(n + 1)));
}
BENCHMARK(BM_KnnSparsify)->Arg(100)->Arg(500);

void BM_PolicyForward(benchmark::State& state) {
  const Fixture f(state.range(0));
  const nn::Policy policy = nn::init_policy(nn::Dims{}, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(nn::policy_logits(policy, f.g, nn::NormMode::kInference));
}
BENCHMARK(BM_PolicyForward)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_SampledRollout(benchmark::State& state) {
  const Fixture f(state.range(0));
  const nn::Policy policy = nn::init_policy(nn::Dims{}, 1);
  const nn::Matrix logits = nn::policy_logits(policy, f.g, nn::NormMode::kInference);
  std::uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        nn::rollout(logits, f.inst, f.dm, f.g, nn::DecodeMode::sample(), ++seed));
}
BENCHMARK(BM_SampledRollout)->Arg(20)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_DiscForward(benchmark::State& state) {
  const Fixture f(state.range(0));
  const nn::Discriminator disc = nn::init_discriminator(nn::Dims{}, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(nn::disc_forward(disc, f.inst, f.dm, f.g, nn::NormMode::kInference));
}
BENCHMARK(BM_DiscForward)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_LocalSearch(benchmark::State& state) {
  const Fixture f(state.range(0));
  const Solution start = expert::initial_solution(f.inst, f.dm, 1);
  for (auto _ : state) {
    std::vector<std::vector<int>> routes;
    for (const Route& r : start.routes) routes.push_back(r.customers);
    expert::local_search(f.inst, f.dm, routes, 10.0, expert::MoveSet{}, 1);
    benchmark::DoNotOptimize(routes);
  }
}
BENCHMARK(BM_LocalSearch)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_HgsShort(benchmark::State& state) {
  const Fixture f(state.range(0));
  expert::HgsConfig cfg;
  cfg.max_iterations = 50;
  cfg.time_budget_s = 60.0;
  for (auto _ : state) benchmark::DoNotOptimize(expert::hgs_solve(f.inst, f.dm, std::nullopt, cfg));
}
BENCHMARK(BM_HgsShort)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_ExpertRefine(benchmark::State& state) {
  const Fixture f(state.range(0));
  const Solution start = expert::initial_solution(f.inst, f.dm, 1);
  expert::HgsConfig cfg;
  cfg.max_iterations = 20;
  cfg.time_budget_s = 60.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(expert::expert_refine(f.inst, f.dm, start, 50, cfg));
}
BENCHMARK(BM_ExpertRefine)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
