#include <benchmark/benchmark.h>

#include "umate/align.hpp"

using namespace umate;

namespace {

ot::Marginals random_marginals(int kappa, Rng& rng) {
  ot::Marginals f;
  for (auto* v : {&f.topology, &f.density, &f.property}) {
    v->resize(static_cast<std::size_t>(kappa));
    double s = 0.0;
    for (auto& x : *v) s += (x = rand_uniform(rng, 0.1, 1.0));
    for (auto& x : *v) x /= s;
  }
  return f;
}

void BM_tripartite_sinkhorn(benchmark::State& state) {
  const int kappa = static_cast<int>(state.range(0));
  Rng rng(7);
  const auto f = random_marginals(kappa, rng);
  const auto cb = nd::Tensor::randn({kappa, 16}, rng);
  const auto kernel = ot::cost_kernel(cb, 0.05);
  ot::SinkhornOptions opt;
  for (auto _ : state) {
    auto plan = ot::tripartite_sinkhorn(f, kernel, opt);
    benchmark::DoNotOptimize(plan.distance);
  }
}
BENCHMARK(BM_tripartite_sinkhorn)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_transport_distance_grad(benchmark::State& state) {
  const int kappa = static_cast<int>(state.range(0));
  Rng rng(7);
  const auto f = random_marginals(kappa, rng);
  auto cb = nd::Var::leaf(nd::Tensor::randn({kappa, 16}, rng));
  ot::SinkhornOptions opt;
  opt.max_iter = 100;
  for (auto _ : state) {
    cb.zero_grad();
    auto d = ot::transport_distance(cb, f, opt);
    nd::backward(d);
    benchmark::DoNotOptimize(cb.grad().data.data());
  }
}
BENCHMARK(BM_transport_distance_grad)->Arg(8)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
