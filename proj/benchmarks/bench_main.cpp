#include <benchmark/benchmark.h>

#include <random>

#include "mssp/infer.hpp"
#include "mssp/layers.hpp"
#include "mssp/model.hpp"
#include "mssp/optim.hpp"
#include "mssp/synth.hpp"

namespace {

mssp::Tensorf noise(mssp::Dims dims, std::uint64_t seed) {
  mssp::Tensorf t(std::move(dims));
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> dist;
  for (float& x : t.data()) x = dist(gen);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto input = noise({8, 32, 32, c}, 1);
  const auto weights = noise({3, 3, c, 128}, 2);
  const mssp::Tensorf bias({128});
  for (auto _ : state) {
    benchmark::DoNotOptimize(mssp::layers::conv2d_forward(input, weights, bias, 1, 1));
  }
}
BENCHMARK(BM_Conv3x3)->Arg(3)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto params = mssp::init_params(0);
  const auto batch = noise({static_cast<std::size_t>(state.range(0)), 32, 32, 3}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mssp::forward(params, {}, batch, mssp::layers::Mode::eval).logits);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  mssp::PatchBatch data;
  data.inputs = noise({8, 32, 32, 3}, 4);
  data.labels = mssp::Tensorf({8, 32, 32});
  for (std::size_t i = 0; i < data.labels.size(); ++i) data.labels[i] = static_cast<float>((i / 32 + i) % 2);
  data.sources.resize(8);
  mssp::TrainConfig config;
  config.steps = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mssp::train_loop(mssp::init_params(0), {}, data, config).losses);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_InferScene(benchmark::State& state) {
  mssp::SynthSpec spec;
  spec.height = spec.width = static_cast<std::size_t>(state.range(0));
  auto scene = mssp::synth_scene(spec).scene;
  mssp::prepare_scene(scene);
  const auto params = mssp::init_params(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mssp::infer_scene(params, {}, scene, 16));
  }
}
BENCHMARK(BM_InferScene)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
