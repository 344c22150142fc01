#include "regopt/datagen.hpp"
#include "regopt/trainer.hpp"

#include <benchmark/benchmark.h>

using namespace regopt;
using train::TrainableParams;
using train::Variant;

namespace {

struct Fixture {
  Fixture(Index n, int halfwidth)
      : op(datagen::hat_kernel(halfwidth), n),
        x(datagen::gen_plateau_signals(32, n, 7)),
        ds(datagen::make_dataset(x, op, datagen::DiagonalLinearDecay{}, 1.0, 8, "p")) {}
  datagen::ConvolutionOperator op;
  Matrix x;
  PairedDataset ds;
};

}  // namespace

// one minibatch loss+gradient evaluation per iteration, batch 32
static void BM_loss_and_grad(benchmark::State& state) {
  const Index n = state.range(0);
  Fixture f(n, 30);
  const Matrix xb = f.ds.x.transpose();
  const Matrix yb = f.ds.y.transpose();
  const Variant v = static_cast<Variant>(state.range(1));
  TrainableParams p{v,
                    v == Variant::aff ? Matrix(Matrix::Zero(n, f.op.m()))
                                      : Matrix(0.1 * Matrix::Identity(n, n)),
                    Vector::Zero(n)};
  for (auto _ : state)
    benchmark::DoNotOptimize(train::loss_and_grad(p, f.op.matrix(), xb, yb, true));
}
BENCHMARK(BM_loss_and_grad)
    ->Args({200, 0})
    ->Args({200, 1})
    ->Args({200, 2})
    ->Args({200, 3})
    ->Args({500, 1})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
