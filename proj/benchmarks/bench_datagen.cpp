#include "regopt/datagen.hpp"
#include "regopt/rng.hpp"

#include <benchmark/benchmark.h>

using namespace regopt;

static void BM_plateau_signal(benchmark::State& state) {
  CounterRng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(datagen::gen_plateau_signal(rng, 200));
}
BENCHMARK(BM_plateau_signal);

static void BM_wind_noise(benchmark::State& state) {
  CounterRng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(datagen::gen_wind_noise(rng, 999));
}
BENCHMARK(BM_wind_noise)->Unit(benchmark::kMicrosecond);

static void BM_speech_like(benchmark::State& state) {
  CounterRng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(datagen::gen_speech_like(rng, 500));
}
BENCHMARK(BM_speech_like)->Unit(benchmark::kMicrosecond);

static void BM_make_dataset_deconv(benchmark::State& state) {
  const datagen::ConvolutionOperator op(datagen::hat_kernel(30), 200);
  const Matrix x = datagen::gen_plateau_signals(state.range(0), 200, 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(datagen::make_dataset(
        x, op, datagen::DiagonalLinearDecay{}, 1.0, 5, "plateau+decay"));
}
BENCHMARK(BM_make_dataset_deconv)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
