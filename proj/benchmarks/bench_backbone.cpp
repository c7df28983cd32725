#include <benchmark/benchmark.h>

#include "umate/diffuse.hpp"

using namespace umate;

namespace {

void BM_backbone_forward(benchmark::State& state) {
  const int h = static_cast<int>(state.range(0));
  Rng rng(3);
  nd::ParamStore store;
  diff::BackboneConfig cfg;
  cfg.max_rows = h;
  diff::Backbone bb(store, cfg, rng);
  const auto tokens = nd::Var::constant(nd::Tensor::randn({h, cfg.d}, rng));
  for (auto _ : state) {
    auto out = bb.forward(tokens);
    benchmark::DoNotOptimize(out.value().data.data());
  }
}
BENCHMARK(BM_backbone_forward)->Arg(8)->Arg(16)->Arg(32)->Arg(64);

void BM_denoise_chain(benchmark::State& state) {
  const int h = static_cast<int>(state.range(0));
  Rng rng(3);
  nd::ParamStore store;
  diff::BackboneConfig cfg;
  cfg.max_rows = h;
  diff::Backbone bb(store, cfg, rng);
  const auto start = nd::Var::constant(nd::Tensor::randn({h, cfg.d}, rng));
  const auto schedule = diff::DiffusionSchedule::geometric();
  const auto mask = diff::MaskSpec::all_unknown(h);
  for (auto _ : state) {
    Rng chain_rng(11);
    auto out = diff::denoise_chain(start, mask, schedule, bb, chain_rng);
    benchmark::DoNotOptimize(out.value().data.data());
  }
}
BENCHMARK(BM_denoise_chain)->Arg(8)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
