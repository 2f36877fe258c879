#include <benchmark/benchmark.h>

#include "vseg/net.hpp"
#include "vseg/rng.hpp"

namespace {

using namespace vseg;

Tensor5<float> random_tensor(int n, int c, int d, int h, int w, uint64_t seed) {
  Tensor5<float> t = Tensor5<float>::zeros(n, c, d, h, w);
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.gaussian());
  return t;
}

void BM_Conv3dForward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int dim = static_cast<int>(state.range(1));
  Tensor5<float> x = random_tensor(1, ch, dim, dim, dim, 1);
  Tensor5<float> y = Tensor5<float>::zeros(1, ch, dim, dim, dim);
  std::vector<float> w(static_cast<std::size_t>(ch) * ch * 27);
  Rng rng(2);
  for (auto& v : w) v = static_cast<float>(rng.gaussian() * 0.1);
  for (auto _ : state) {
    std::fill(y.data.begin(), y.data.end(), 0.0f);
    netops::conv3d_accumulate(x, w, ch, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, y);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(y.size()) * ch * 27);
}
BENCHMARK(BM_Conv3dForward)->Args({8, 32})->Args({16, 16});

void BM_Conv3dBackward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int dim = static_cast<int>(state.range(1));
  Tensor5<float> x = random_tensor(1, ch, dim, dim, dim, 1);
  Tensor5<float> gy = random_tensor(1, ch, dim, dim, dim, 3);
  Tensor5<float> gx = Tensor5<float>::zeros(1, ch, dim, dim, dim);
  std::vector<float> w(static_cast<std::size_t>(ch) * ch * 27), gw(w.size()), gb(ch);
  Rng rng(2);
  for (auto& v : w) v = static_cast<float>(rng.gaussian() * 0.1);
  for (auto _ : state) {
    std::fill(gx.data.begin(), gx.data.end(), 0.0f);
    netops::conv3d_scatter(gy, w, ch, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, gx);
    netops::conv3d_param_grads(x, gy, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, gw, &gb);
    benchmark::DoNotOptimize(gx.data.data());
  }
}
BENCHMARK(BM_Conv3dBackward)->Args({8, 32});

}  // namespace
