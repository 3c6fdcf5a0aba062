#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "rlqls/env.hpp"
#include "rlqls/ising.hpp"
#include "rlqls/policy.hpp"
#include "rlqls/subproblem.hpp"

namespace {

using namespace rlqls;

void BM_Energy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto p = generate_instance(n, rng);
  const auto c = SpinConfig::random(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(energy(p, c));
}
BENCHMARK(BM_Energy)->Arg(16)->Arg(32)->Arg(128);

void BM_DeltaEnergy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto p = generate_instance(n, rng);
  const auto c = SpinConfig::random(n, rng);
  const std::vector<std::size_t> flips{0, n / 3, n / 2, n - 1, 1};
  for (auto _ : state) benchmark::DoNotOptimize(delta_energy(p, c, flips));
}
BENCHMARK(BM_DeltaEnergy)->Arg(16)->Arg(32)->Arg(128);

void BM_ExtractAndSolve(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const auto p = generate_instance(32, rng);
  const auto c = SpinConfig::random(32, rng);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m; ++i) idx.push_back(3 * i % 32);
  for (auto _ : state) benchmark::DoNotOptimize(solve_exact(extract(p, c, idx)));
}
BENCHMARK(BM_ExtractAndSolve)->Arg(3)->Arg(5)->Arg(10);

void BM_Forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const NetParams params = NetParams::initialize(default_architecture(n), rng);
  std::vector<double> x(encoded_size(n), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, x));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(32);

void BM_ForwardBackwardBatch(benchmark::State& state) {
  const std::size_t n = 16;
  const auto rows = static_cast<Eigen::Index>(state.range(0));
  Rng rng(5);
  const NetParams params = NetParams::initialize(default_architecture(n), rng);
  RowMatrix x = RowMatrix::Constant(rows, static_cast<Eigen::Index>(encoded_size(n)), 0.5);
  RowMatrix g_logits = RowMatrix::Constant(rows, static_cast<Eigen::Index>(n), 0.01);
  Eigen::VectorXd g_values = Eigen::VectorXd::Constant(rows, 0.01);
  std::vector<double> grad(params.size());
  for (auto _ : state) {
    const auto cache = forward_batch(params, x);
    backward_batch(params, cache, g_logits, g_values, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * rows);
}
BENCHMARK(BM_ForwardBackwardBatch)->Arg(201)->Arg(2010);

void BM_EnvStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  auto p = generate_instance(n, rng);
  p.set_gse_ref(GseRef{-1e6, GseProvenance::kTabu});  // never undercut
  EnvConfig cfg;
  cfg.m = 5;
  QlsEnv env(std::make_shared<const IsingProblem>(std::move(p)), cfg);
  AgentState s = env.reset(rng);
  for (auto _ : state) {
    auto [action, lp] = random_policy(s, 5, rng);
    benchmark::DoNotOptimize(env.step(s, action, rng));
  }
}
BENCHMARK(BM_EnvStep)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
