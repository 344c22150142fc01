#include "regopt/linalg.hpp"
#include "regopt/rng.hpp"

#include <benchmark/benchmark.h>

using namespace regopt;

namespace {

SymmetricMatrix make_spd(Index n, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  return SymmetricMatrix(Matrix(g * g.transpose() + 0.1 * Matrix::Identity(n, n)));
}

SymmetricMatrix make_sym(Index n, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  return SymmetricMatrix(g);
}

}  // namespace

static void BM_sym_eig(benchmark::State& state) {
  const SymmetricMatrix s = make_sym(state.range(0), 1);
  for (auto _ : state) benchmark::DoNotOptimize(sym_eig(s));
}
BENCHMARK(BM_sym_eig)->Arg(50)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_lyapunov_solve(benchmark::State& state) {
  const SymmetricMatrix b = make_spd(state.range(0), 2);
  const SymmetricMatrix d = make_sym(state.range(0), 3);
  for (auto _ : state) benchmark::DoNotOptimize(lyapunov_solve(b, d));
}
BENCHMARK(BM_lyapunov_solve)->Arg(50)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_solve_spd(benchmark::State& state) {
  const Index n = state.range(0);
  const SymmetricMatrix s = make_spd(n, 4);
  CounterRng rng(5);
  Vector rhs(n);
  for (Index i = 0; i < n; ++i) rhs(i) = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(solve_spd(s, rhs));
}
BENCHMARK(BM_solve_spd)->Arg(50)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_spd_factor(benchmark::State& state) {
  const SymmetricMatrix s = make_spd(state.range(0), 6);
  for (auto _ : state) benchmark::DoNotOptimize(spd_factor(s));
}
BENCHMARK(BM_spd_factor)->Arg(50)->Arg(200)->Arg(500)->Unit(benchmark::kMillisecond);
