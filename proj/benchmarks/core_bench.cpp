#include <benchmark/benchmark.h>

#include "kfprop/model.hpp"
#include "kfprop/rng.hpp"
#include "kfprop/spectral.hpp"

namespace {

using namespace kfprop;

Tensor<float> rand_t(Rng& rng, const Shape& shape) {
  Tensor<float> t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_conv2d(benchmark::State& state) {
  std::size_t hw = static_cast<std::size_t>(state.range(0));
  std::size_t c = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  Tensor<float> x = rand_t(rng, {hw, hw, c});
  Tensor<float> k = rand_t(rng, {3, 3, c, c});
  for (auto _ : state) {
    Graph<float> g;
    benchmark::DoNotOptimize(conv2d(g, g.input(x), g.input(k), 1, 1).id);
  }
  state.SetItemsProcessed(state.iterations() * hw * hw * c);
}
BENCHMARK(BM_conv2d)->Args({32, 8})->Args({64, 16})->Args({64, 32});

void BM_fft2(benchmark::State& state) {
  std::size_t hw = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor<float> x = rand_t(rng, {hw, hw, 1});
  for (auto _ : state) {
    auto f = fft2(x);
    benchmark::DoNotOptimize(f.real.data.data());
  }
  state.SetItemsProcessed(state.iterations() * hw * hw);
}
BENCHMARK(BM_fft2)->Arg(32)->Arg(64)->Arg(128);

void BM_naive_dft2(benchmark::State& state) {
  std::size_t hw = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  Tensor<float> x = rand_t(rng, {hw, hw, 1});
  for (auto _ : state) {
    auto f = naive_dft2(x);
    benchmark::DoNotOptimize(f.real.data.data());
  }
  state.SetItemsProcessed(state.iterations() * hw * hw);
}
BENCHMARK(BM_naive_dft2)->Arg(16)->Arg(64);

void BM_token_attention(benchmark::State& state) {
  ModelConfig mc;
  mc.grid = static_cast<std::size_t>(state.range(0));
  mc.intra_blocks = 1;
  mc.cross_blocks = 0;
  mc.use_ffc = false;
  Model<float> m(mc, 1);
  Rng rng(4);
  Tensor<float> q = rand_t(rng, {mc.tokens(), mc.token_dim});
  Tensor<float> e = rand_t(rng, {mc.tokens(), mc.token_dim});
  for (auto _ : state) {
    Graph<float> g;
    benchmark::DoNotOptimize(m.token_attention(g, g.input(q), {g.input(e)}, "blk.0.attn.").id);
  }
  state.SetItemsProcessed(state.iterations() * mc.tokens() * mc.token_dim);
}
BENCHMARK(BM_token_attention)->Arg(4)->Arg(8);

void BM_deformable_write(benchmark::State& state) {
  std::size_t hw = static_cast<std::size_t>(state.range(0));
  ModelConfig mc;
  mc.intra_blocks = 0;
  mc.cross_blocks = 1;
  mc.use_ffc = false;
  Model<float> m(mc, 1);
  Rng rng(5);
  Tensor<float> t = rand_t(rng, {hw, hw, mc.local_channels});
  Tensor<float> k1 = rand_t(rng, {hw, hw, mc.local_channels});
  Tensor<float> k2 = rand_t(rng, {hw, hw, mc.local_channels});
  std::vector<Tensor<float>> flows, fbs;
  for (int i = 0; i < 2; ++i) {
    flows.push_back(rand_t(rng, {hw, hw, 2}));
    fbs.push_back(rand_t(rng, {hw, hw, 1}));
  }
  for (auto _ : state) {
    Graph<float> g;
    benchmark::DoNotOptimize(
        m.deformable_write(g, g.input(t), {g.input(k1), g.input(k2)}, flows, fbs, "blk.0.deform.")
            .id);
  }
  state.SetItemsProcessed(state.iterations() * hw * hw * mc.local_channels);
}
BENCHMARK(BM_deformable_write)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
