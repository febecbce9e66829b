#include <benchmark/benchmark.h>

#include "aaunet/haam.hpp"
#include "aaunet/model.hpp"
#include "aaunet/ops.hpp"
#include "aaunet/training.hpp"

namespace {

using namespace aaunet;

Tensor<float> random_tensor(Shape s, Rng& rng) {
  Tensor<float> t(s);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

// Args: channels, side, kernel, dilation.
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = state.range(0), side = state.range(1), k = state.range(2), d = state.range(3);
  Rng rng(1);
  const auto x = constant(random_tensor(Shape{1, c, side, side}, rng));
  const auto w = constant(random_tensor(Shape{c, c, k, k}, rng));
  const auto b = constant(Tensor<float>(Shape{1, c, 1, 1}));
  const Conv2dOptions opt{1, d * (k - 1) / 2, d};
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, opt));
  state.SetItemsProcessed(state.iterations() * c * c * k * k * side * side);
}
BENCHMARK(BM_Conv2dForward)
    ->Args({16, 64, 3, 1})
    ->Args({16, 64, 5, 1})
    ->Args({16, 64, 3, 3})
    ->Args({64, 32, 3, 1})
    ->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = state.range(0), side = state.range(1);
  Rng rng(2);
  const auto x = leaf(random_tensor(Shape{1, c, side, side}, rng), true);
  const auto w = leaf(random_tensor(Shape{c, c, 3, 3}, rng), true);
  const auto b = leaf(Tensor<float>(Shape{1, c, 1, 1}), true);
  for (auto _ : state) {
    x->grad.reset();
    w->grad.reset();
    b->grad.reset();
    backward(sum(conv2d(x, w, b, Conv2dOptions{1, 1, 1})));
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 64})->Args({64, 32})->Unit(benchmark::kMicrosecond);

// Args: variant index into kAllVariants, channels, side.
void BM_HaamForward(benchmark::State& state) {
  const Variant v = kAllVariants[static_cast<std::size_t>(state.range(0))];
  const auto c = state.range(1), side = state.range(2);
  Rng rng(3);
  ParameterStore<float> store;
  HaamBlock<float> block(HaamConfig{.in_channels = c, .out_channels = c, .variant = v}, store, "b", rng);
  const auto x = constant(random_tensor(Shape{1, c, side, side}, rng));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(block.forward(x));
  state.SetLabel(std::string(variant_name(v)));
}
BENCHMARK(BM_HaamForward)
    ->ArgsProduct({{0, 1, 2, 3, 4}, {16}, {64}})
    ->Unit(benchmark::kMicrosecond);

void BM_HaamForwardBackward(benchmark::State& state) {
  const Variant v = kAllVariants[static_cast<std::size_t>(state.range(0))];
  Rng rng(4);
  ParameterStore<float> store;
  HaamBlock<float> block(HaamConfig{.in_channels = 16, .out_channels = 16, .variant = v}, store, "b", rng);
  const auto x = leaf(random_tensor(Shape{1, 16, 64, 64}, rng), true);
  for (auto _ : state) {
    store.zero_grad();
    x->grad.reset();
    backward(sum(block.forward(x)));
  }
  state.SetLabel(std::string(variant_name(v)));
}
BENCHMARK(BM_HaamForwardBackward)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

// One epoch of two images in one batch, including the Dice evaluation pass.
void BM_TrainEpoch(benchmark::State& state) {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.base_width = 8;
  cfg.height = 64;
  cfg.width = 64;
  AauNet<float> model(cfg, 5);
  SynthOptions so;
  so.count = static_cast<std::int64_t>(state.range(0));
  const auto items = synth_images(so);
  const auto samples = to_samples(items);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = state.range(0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(model, std::span<const Sample>(samples), {}, tc));
  }
}
BENCHMARK(BM_TrainEpoch)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
