#include <benchmark/benchmark.h>

#include "lga/attention.hpp"
#include "lga/model.hpp"
#include "lga/nn.hpp"
#include "lga/training.hpp"

using namespace lga;

namespace {

template <typename T>
Tensor<T> noise(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = T(rng.uniform(-1.0, 1.0));
  return Tensor<T>::from_data(std::move(shape), std::move(v));
}

// Args: length, kernel. The embedding stem of the default model is 12 -> 128.
void BM_Conv1d(benchmark::State& state) {
  const auto len = std::size_t(state.range(0));
  const auto k = std::size_t(state.range(1));
  Rng rng(1);
  auto p = nn::Conv1dParams<float>::create(12, 128, k, 1, (k - 1) / 2, rng);
  auto x = noise<float>({4, 12, len}, 2);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv1d(x, p));
  state.SetItemsProcessed(state.iterations() * 4 * len);
}
BENCHMARK(BM_Conv1d)->Args({512, 3})->Args({4096, 3})->Args({4096, 16});

// Args: variant index, sequence length.
void BM_AttentionForward(benchmark::State& state) {
  attn::LgaConfig c;
  c.variant = attn::kAllVariants[state.range(0)];
  const auto n = std::size_t(state.range(1));
  c.max_len = n;
  Rng rng(3);
  auto w = attn::LgaWeights<float>::create(c, rng);
  auto x = noise<float>({4, n, c.embed_dim}, 4);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(attn::attention_forward(x, c, w));
  state.SetLabel(std::string(attn::to_string(c.variant)));
  state.SetItemsProcessed(state.iterations() * 4 * n);
}
BENCHMARK(BM_AttentionForward)
    ->ArgsProduct({{0, 1, 2, 3, 4}, {64, 256}})
    ->Unit(benchmark::kMicrosecond);

void BM_QueryPath(benchmark::State& state) {
  attn::LgaConfig c;
  Rng rng(5);
  auto w = attn::LgaWeights<double>::create(c, rng);
  auto x = noise<double>({4, 256, c.embed_dim}, 6);
  const auto path = state.range(0) ? attn::QueryPath::kReference : attn::QueryPath::kFast;
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(attn::local_queries(x, c, w, path));
  state.SetLabel(state.range(0) ? "reference" : "fast");
}
BENCHMARK(BM_QueryPath)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_ModelForward(benchmark::State& state) {
  auto cfg = state.range(0) ? model::ModelConfig{} : model::ModelConfig::tiny();
  auto m = model::LgaModel<float>::create(cfg, 7);
  auto x = noise<float>({1, cfg.leads, cfg.input_length}, 8);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(x));
  state.SetLabel(state.range(0) ? "default" : "tiny");
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// One optimiser step on a batch of 16 for the tiny model.
void BM_TrainStep(benchmark::State& state) {
  auto cfg = model::ModelConfig::tiny();
  auto m = model::LgaModel<float>::create(cfg, 9);
  auto x = noise<float>({16, cfg.leads, cfg.input_length}, 10);
  auto y = Tensor<float>::zeros({16, cfg.num_classes});
  train::AdamW<float> opt(m.parameters(), {});
  for (auto _ : state) {
    opt.zero_grad();
    auto loss = train::bce_with_logits(m.forward(x), y);
    loss.backward();
    opt.step(1e-4);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
