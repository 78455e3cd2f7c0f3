#include <benchmark/benchmark.h>

#include "sparsest/mlp.hpp"
#include "sparsest/path_prob.hpp"
#include "sparsest/viz.hpp"

using namespace sparsest;

namespace {

const Dataset& spiral() {
  static const Dataset d = generate(SpiralSpec{});
  return d;
}

MaskedMlp model(int width) { return init(MlpArch{width}, 1); }

void BM_accuracy_serial(benchmark::State& st) {
  const MaskedMlp m = model(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(accuracy_serial(m, spiral()));
}

void BM_accuracy_parallel(benchmark::State& st) {
  const MaskedMlp m = model(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(accuracy(m, spiral()));
}

void BM_logit_grid_serial(benchmark::State& st) {
  const MaskedMlp m = model(16);
  const VizSpec s;
  for (auto _ : st) benchmark::DoNotOptimize(logit_grid_serial(m, s));
}

void BM_logit_grid_parallel(benchmark::State& st) {
  const MaskedMlp m = model(16);
  const VizSpec s;
  for (auto _ : st) benchmark::DoNotOptimize(logit_grid(m, s));
}

PathProbParams mc_params() {
  PathProbParams p;
  p.width = 32;
  p.depth = 4;
  p.nnz = {4, 4, 4, 4};
  return p;
}

void BM_monte_carlo_serial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(path_prob_monte_carlo_serial(mc_params(), 1, 20000, 3));
}

void BM_monte_carlo_parallel(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(path_prob_monte_carlo(mc_params(), 1, 20000, 3));
}

// One training epoch; the argument is the structured neuron count, so small
// values exercise the sparse kernel and 16 the dense one.
void BM_train_epoch(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const MaskedMlp m = init(MlpArch{16}, 1, structured_mask({n, n, n}, 16), FanInMode::dense);
  TrainConfig c;
  c.epochs = 1;
  for (auto _ : st) benchmark::DoNotOptimize(train(m, spiral(), c));
}

void BM_reference_gradient(benchmark::State& st) {
  const MaskedMlp m = model(16);
  for (auto _ : st) benchmark::DoNotOptimize(loss_and_grad(m, spiral()));
}

}  // namespace

BENCHMARK(BM_accuracy_serial)->Arg(16)->Arg(64);
BENCHMARK(BM_accuracy_parallel)->Arg(16)->Arg(64);
BENCHMARK(BM_logit_grid_serial);
BENCHMARK(BM_logit_grid_parallel);
BENCHMARK(BM_monte_carlo_serial);
BENCHMARK(BM_monte_carlo_parallel);
BENCHMARK(BM_train_epoch)->Arg(3)->Arg(7)->Arg(16);
BENCHMARK(BM_reference_gradient);

BENCHMARK_MAIN();
