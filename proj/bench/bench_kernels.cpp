// Serial reference kernels against their OpenMP counterparts, plus whole
// forward passes and cached vs uncached decoding of the default model.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "densesteer/kernels.hpp"
#include "densesteer/model.hpp"

namespace k = densesteer::kernels;

namespace {

std::vector<float> random_floats(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = dist(gen);
  return v;
}

template <void (*Linear)(const k::LinearArgs&)>
void BM_Linear(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 64, out = 256;
  const auto x = random_floats(rows * in, 1), w = random_floats(out * in, 2), b = random_floats(out, 3);
  std::vector<float> y(rows * out);
  const k::LinearArgs args{x, w, b, y, rows, in, out};
  for (auto _ : state) {
    Linear(args);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * in * out));
}

template <void (*Attention)(const k::AttentionArgs&)>
void BM_Attention(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  const auto q = random_floats(rows * d, 4), kk = random_floats(rows * d, 5), v = random_floats(rows * d, 6);
  std::vector<float> out(rows * d);
  const k::AttentionArgs args{q, kk, v, out, rows, 0, d, 4};
  for (auto _ : state) {
    Attention(args);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_Forward(benchmark::State& state, k::Policy policy) {
  const densesteer::MicroModel m = densesteer::init_micro_model(densesteer::ModelConfig{}, policy);
  std::vector<densesteer::TokenId> ids(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<densesteer::TokenId>(32 + i % 90);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(ids));
}

void BM_Generate(benchmark::State& state, bool cached) {
  const densesteer::MicroModel m = densesteer::init_micro_model(densesteer::ModelConfig{});
  const std::vector<densesteer::TokenId> prompt(64, 65);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(cached ? m.greedy_generate(prompt, n) : m.greedy_generate_uncached(prompt, n));
  }
}

}  // namespace

BENCHMARK(BM_Linear<k::serial::linear>)->Name("linear/serial")->Arg(1)->Arg(64)->Arg(512);
BENCHMARK(BM_Linear<k::parallel::linear>)->Name("linear/parallel")->Arg(1)->Arg(64)->Arg(512);
BENCHMARK(BM_Attention<k::serial::attention>)->Name("attention/serial")->Arg(64)->Arg(512);
BENCHMARK(BM_Attention<k::parallel::attention>)->Name("attention/parallel")->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(BM_Forward, serial, k::Policy::kSerial)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Forward, parallel, k::Policy::kParallel)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Generate, cached, true)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Generate, uncached, false)->Arg(32)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
