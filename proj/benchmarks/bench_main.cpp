#include <benchmark/benchmark.h>

#include "lmolab/linalg.hpp"
#include "lmolab/model.hpp"
#include "lmolab/optim.hpp"
#include "lmolab/random.hpp"

using namespace lmolab;

static void BM_Svd(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = rng.normal_matrix(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(svd(a));
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(64)->Arg(128);

static void BM_NewtonSchulz(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Matrix a = rng.normal_matrix(n, n);
  for (auto _ : state) benchmark::DoNotOptimize(msign_newton_schulz(a));
}
BENCHMARK(BM_NewtonSchulz)->Arg(16)->Arg(64)->Arg(128);

static void BM_Lmo(benchmark::State& state) {
  const auto rule = static_cast<optim::UpdateRule>(state.range(0));
  Rng rng(3);
  const Matrix m = rng.normal_matrix(64, 256);
  optim::LmoOptions opts;
  opts.exact_msign = false;
  for (auto _ : state) benchmark::DoNotOptimize(optim::lmo_direction(m, rule, 1.0, opts));
  state.SetLabel(std::string(optim::to_string(rule)));
}
BENCHMARK(BM_Lmo)->DenseRange(0, 5);

static void BM_ModelStep(benchmark::State& state) {
  model::ModelConfig cfg;
  const auto params = model::init_params(cfg, 4);
  Rng rng(5);
  model::Batch batch(8);
  for (auto& ex : batch) {
    for (std::size_t t = 0; t < cfg.seq_len; ++t) {
      ex.input.push_back(static_cast<model::Token>(rng.index(cfg.vocab)));
      ex.target.push_back(static_cast<model::Token>(rng.index(cfg.vocab)));
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(model::loss_and_grads(params, batch));
}
BENCHMARK(BM_ModelStep)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
