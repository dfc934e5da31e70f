#include <benchmark/benchmark.h>

#include "boxprior/fusion/training.hpp"

namespace fus = boxprior::fusion;

namespace {

void BM_TrainStep(benchmark::State& state) {
  const fus::ModelConfig config;
  const auto scenes = fus::training_scenes(7, static_cast<std::size_t>(state.range(0)));
  const auto inputs = fus::prepare_scenes(scenes, config);
  auto params = fus::init_model(config, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fus::train_step(params, inputs, config, 0.1, 0.0));
  }
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_ForwardLossesPlain(benchmark::State& state) {
  const fus::ModelConfig config;
  const auto inputs = fus::prepare_scenes(fus::training_scenes(7, 8), config);
  const auto params = fus::init_model(config, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fus::reference_losses(params, inputs, config, 0.1));
  }
}
BENCHMARK(BM_ForwardLossesPlain)->Unit(benchmark::kMillisecond);

}  // namespace
