// microbenchmarks for the hot paths: forward/backward passes, attack
// generation, dependence estimation, and curvature probing
#include <benchmark/benchmark.h>

#include <vector>

#include "semirobust/attacks.hpp"
#include "semirobust/dataset.hpp"
#include "semirobust/mi.hpp"
#include "semirobust/network.hpp"
#include "semirobust/rng.hpp"
#include "semirobust/second_order.hpp"
#include "semirobust/tape.hpp"

namespace {

using namespace semirobust;

Network bench_network() {
  return Network::build({2, 16, 16, 16, 16, 8, 2},
                        {Activation::relu, Activation::relu, Activation::relu, Activation::relu,
                         Activation::relu, Activation::identity},
                        7);
}

Dataset bench_data(std::size_t n) { return generate_dataset(DatasetKind::moons, n, 0.1, 11); }

void BM_forward(benchmark::State& state) {
  const Network net = bench_network();
  const Dataset data = bench_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(data.features));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_forward)->Arg(128)->Arg(1024);

void BM_backward(benchmark::State& state) {
  Network net = bench_network();
  const Dataset data = bench_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Tape tape;
    const Network::Traced traced = net.trace(tape, data.features, false, true);
    const Tape::NodeRef loss =
        tape.mean_all(tape.softmax_cross_entropy(traced.output(), data.labels));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(traced.weights.front()));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_backward)->Arg(128)->Arg(1024);

void BM_pgd(benchmark::State& state) {
  const Network net = bench_network();
  const Dataset data = bench_data(128);
  AttackConfig cfg;
  cfg.epsilon = 0.3;
  cfg.step_size = 0.075;
  cfg.iterations = static_cast<std::size_t>(state.range(0));
  cfg.seed = 5;
  LossSpec loss;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pgd(net, loss, data.features, data.labels, cfg));
  }
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_pgd)->Arg(1)->Arg(10);

void BM_edge_mi(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  RandomStream rng(3);
  Tensor x({n, 4});
  Tensor y({n, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = 0.5 * x.data()[i] + rng.normal();
  EdgeConfig cfg;
  cfg.seed = 9;
  for (auto _ : state) {
    benchmark::DoNotOptimize(edge_mi(x, y, default_bandwidth_scales(), cfg));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_edge_mi)->Arg(2000)->Arg(20000);

void BM_power_iteration(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  RandomStream rng(17);
  std::vector<double> m(dim * dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = rng.normal();
      m[i * dim + j] = v;
      m[j * dim + i] = v;
    }
  }
  auto apply = [&](const std::vector<double>& v) {
    std::vector<double> out(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) out[i] += m[i * dim + j] * v[j];
    }
    return out;
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(max_eigenvalue(apply, dim, 200, 1e-9, 23));
  }
}
BENCHMARK(BM_power_iteration)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
