#include "regopt/datagen.hpp"
#include "regopt/estimators.hpp"
#include "regopt/rng.hpp"

#include <benchmark/benchmark.h>

using namespace regopt;

namespace {

// deconvolution benchmark dimensions
const ProblemMoments& deconv_moments() {
  static const ProblemMoments pm = [] {
    const datagen::ConvolutionOperator op(datagen::hat_kernel(30), 200);
    const Matrix x = datagen::gen_plateau_signals(5000, 200, 1);
    const PairedDataset ds = datagen::make_dataset(
        x, op, datagen::DiagonalLinearDecay{}, 1.0, 2, "plateau+decay");
    const MomentEstimate mo = empirical_moments(ds.x);
    const NoiseMomentEstimate noi = noise_moments_from_pairs(ds, op.matrix());
    return ProblemMoments(op.matrix(), mo.mean, jitter_regularize(mo.covariance, 1e-10),
                          jitter_regularize(noi.covariance, 1e-10));
  }();
  return pm;
}

}  // namespace

static void BM_lmmse(benchmark::State& state) {
  const ProblemMoments& pm = deconv_moments();
  for (auto _ : state) benchmark::DoNotOptimize(lmmse(pm));
}
BENCHMARK(BM_lmmse)->Unit(benchmark::kMillisecond);

static void BM_optimal_lavrentiev(benchmark::State& state) {
  const ProblemMoments& pm = deconv_moments();
  for (auto _ : state) benchmark::DoNotOptimize(optimal_lavrentiev(pm));
}
BENCHMARK(BM_optimal_lavrentiev)->Unit(benchmark::kMillisecond);

static void BM_optimal_quadratic(benchmark::State& state) {
  const ProblemMoments& pm = deconv_moments();
  for (auto _ : state) benchmark::DoNotOptimize(optimal_quadratic(pm));
}
BENCHMARK(BM_optimal_quadratic)->Unit(benchmark::kMillisecond);

static void BM_risk_closed_form(benchmark::State& state) {
  const ProblemMoments& pm = deconv_moments();
  const AffineMap map = lmmse(pm);
  for (auto _ : state) benchmark::DoNotOptimize(risk_closed_form(pm, map));
}
BENCHMARK(BM_risk_closed_form)->Unit(benchmark::kMillisecond);
