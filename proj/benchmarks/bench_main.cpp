#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cardioseq/layers.hpp"
#include "cardioseq/metrics.hpp"
#include "cardioseq/model.hpp"
#include "cardioseq/ops.hpp"

namespace {

using namespace cardioseq;

Tensor<float> random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<float> data(n);
  for (auto& v : data) v = dist(rng);
  return Tensor<float>::from_data(std::move(shape), std::move(data), requires_grad);
}

// Same-padded 3x3x3 convolution; the argument is the channel count.
void BM_ConvForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Conv3d<float> layer(c, c, {3, 3, 3});
  init_parameters(ParameterList<float>{{"w", layer.weight, InitRule::uniform_fan_in}}, 1);
  const auto x = random_tensor({c, 8, 32, 32}, 2);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.numel()));
}
BENCHMARK(BM_ConvForward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ConvForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Conv3d<float> layer(c, c, {3, 3, 3});
  auto x = random_tensor({c, 8, 32, 32}, 3, true);
  for (auto _ : state) {
    backward(sum(layer.forward(x)));
    layer.weight.zero_grad();
    x.zero_grad();
  }
}
BENCHMARK(BM_ConvForwardBackward)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ConvLSTMStep(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  ConvLSTMCell<float> cell(2 * hidden, hidden, {3, 3, 3});
  ParameterList<float> params;
  cell.collect_parameters("cell", params);
  init_parameters(params, 4);
  const auto x = random_tensor({2 * hidden, 8, 32, 32}, 5);
  const auto s0 = cell.initial_state({8, 32, 32});
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(cell.step(x, s0));
}
BENCHMARK(BM_ConvLSTMStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

// Encoder pass on one frame of the default 24x96x96 grid.
void BM_EncodeDefaultGrid(benchmark::State& state) {
  ModelConfig config;
  SegNet<float> model(config);
  model.init_parameters(6);
  const auto frame = random_tensor({1, 24, 96, 96}, 7);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.encode(frame));
}
BENCHMARK(BM_EncodeDefaultGrid)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_DiceDefaultGrid(benchmark::State& state) {
  std::mt19937_64 rng(8);
  std::vector<std::uint8_t> p(24 * 96 * 96), t(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng() & 1;
    t[i] = rng() & 1;
  }
  for (auto _ : state) benchmark::DoNotOptimize(dice(p, t));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(2 * p.size()));
}
BENCHMARK(BM_DiceDefaultGrid);

}  // namespace

BENCHMARK_MAIN();
