// Serial reference kernels vs the OpenMP kernels on SpoofNet-sized layers.
// Set OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>

#include "spoof/kernels.hpp"

namespace {

using spoof::ConvConfig;
using spoof::PoolConfig;
using spoof::Tensor;

Tensor<float> noise(spoof::Shape shape, unsigned seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(0.f, 1.f);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// args: batch, in channels, side, out channels
struct ConvCase {
  Tensor<float> x, k, b, up;
  ConvConfig cfg;
  explicit ConvCase(const benchmark::State& s) {
    const auto n = static_cast<std::size_t>(s.range(0)), c = static_cast<std::size_t>(s.range(1)),
               side = static_cast<std::size_t>(s.range(2)), o = static_cast<std::size_t>(s.range(3));
    cfg = {o, {3, 3}, {1, 1}, {1, 1}};
    x = noise({n, c, side, side}, 1);
    k = noise({o, c, 3, 3}, 2);
    b = noise({o}, 3);
    up = noise({n, o, side, side}, 4);
  }
};

void ConvForwardParallel(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(spoof::conv2d_forward(c.x, c.k, c.b, c.cfg));
}

void ConvForwardReference(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(spoof::reference::conv2d_forward(c.x, c.k, c.b, c.cfg));
}

void ConvBackwardParallel(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(spoof::conv2d_backward(c.x, c.k, c.cfg, c.up));
}

void ConvBackwardReference(benchmark::State& s) {
  ConvCase c(s);
  for (auto _ : s) benchmark::DoNotOptimize(spoof::reference::conv2d_backward(c.x, c.k, c.cfg, c.up));
}

void PoolParallel(benchmark::State& s) {
  const auto x = noise({8, 32, 96, 96}, 5);
  for (auto _ : s) benchmark::DoNotOptimize(spoof::maxpool_forward(x, PoolConfig{}));
}

void PoolReference(benchmark::State& s) {
  const auto x = noise({8, 32, 96, 96}, 5);
  for (auto _ : s) benchmark::DoNotOptimize(spoof::reference::maxpool_forward(x, PoolConfig{}));
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({8, 1, 96, 16})->Args({8, 16, 48, 32})->Args({8, 48, 12, 64})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(ConvForwardParallel)->Apply(conv_args);
BENCHMARK(ConvForwardReference)->Apply(conv_args);
BENCHMARK(ConvBackwardParallel)->Apply(conv_args);
BENCHMARK(ConvBackwardReference)->Apply(conv_args);
BENCHMARK(PoolParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(PoolReference)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
