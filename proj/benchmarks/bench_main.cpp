#include <benchmark/benchmark.h>

#include <cmath>

#include "spam/curvature.hpp"
#include "spam/laplace.hpp"
#include "spam/network.hpp"
#include "spam/pruning.hpp"

using namespace spam;

namespace {

const Likelihood lik = Likelihood::categorical();

struct Fixture {
  Network net;
  Dataset data;
};

Fixture make(std::size_t d, std::size_t hidden, std::size_t classes, std::size_t n) {
  Rng rng(7);
  const std::vector<std::size_t> widths{d, hidden, classes};
  Fixture f{Network::initialized(mlp_layers(widths), rng), synth_blobs(rng, n, d, classes, 1.0)};
  return f;
}

Matrix random_spd(std::size_t n, Rng& rng) {
  Matrix a(n, n);
  for (auto& v : a.values()) v = rng.normal();
  Matrix s = matmul_tn(a, a);
  for (std::size_t i = 0; i < n; ++i) s(i, i) += 1.0;
  return s;
}

void BM_Forward(benchmark::State& state) {
  const auto f = make(784, state.range(0), 10, 128);
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.net, f.data.features));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(256);

void BM_Backward(benchmark::State& state) {
  const auto f = make(784, state.range(0), 10, 128);
  const auto cache = forward_cached(f.net, f.data.features);
  const Matrix up(128, 10, 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(backward(f.net, cache, up));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(256);

void BM_GgnDiag(benchmark::State& state) {
  const auto f = make(784, 256, 10, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ggn_diag(f.net, lik, f.data));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GgnDiag)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Kfac(benchmark::State& state) {
  const auto f = make(30, 100, 2, 512);
  for (auto _ : state) benchmark::DoNotOptimize(kfac(f.net, lik, f.data, KfacMode::GgnExact));
}
BENCHMARK(BM_Kfac)->Unit(benchmark::kMillisecond);

void BM_SymEig(benchmark::State& state) {
  Rng rng(3);
  const Matrix m = random_spd(state.range(0), rng);
  for (auto _ : state) benchmark::DoNotOptimize(sym_eig(m));
}
BENCHMARK(BM_SymEig)->Arg(32)->Arg(101)->Unit(benchmark::kMillisecond);

void BM_KfacCorrection(benchmark::State& state) {
  Rng rng(5);
  const std::size_t a = state.range(0), g = state.range(1);
  const SymEig ea = sym_eig(random_spd(a, rng)), eg = sym_eig(random_spd(g, rng));
  std::vector<double> delta(a * g);
  for (auto& d : delta) d = std::exp(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(kfac_prior_correction(ea, eg, delta));
}
BENCHMARK(BM_KfacCorrection)->Args({31, 100})->Args({101, 100});

void BM_LogMarglikDiag(benchmark::State& state) {
  const auto f = make(30, 100, 2, 512);
  const PosteriorState ps(f.net, ggn_diag(f.net, lik, f.data), std::vector<double>(f.net.num_params(), 1.0));
  for (auto _ : state) benchmark::DoNotOptimize(log_marglik(f.net, lik, f.data, ps));
}
BENCHMARK(BM_LogMarglikDiag);

}  // namespace

BENCHMARK_MAIN();
