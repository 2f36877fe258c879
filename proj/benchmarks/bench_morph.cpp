#include <benchmark/benchmark.h>

#include "vseg/phantom.hpp"
#include "vseg/volume.hpp"

namespace {

using namespace vseg;

PhantomSpec bench_spec() {
  PhantomSpec spec;
  spec.family = PhantomFamily::kBifurcatedTube;
  spec.dims = {32, 32, 32};
  return spec;
}

void BM_Dilate(benchmark::State& state) {
  BinaryMask m = generate_case(bench_spec(), 7).gt;
  for (auto _ : state) {
    BinaryMask d = morph(m, MorphOp::kDilate, static_cast<int>(state.range(0)), 6);
    benchmark::DoNotOptimize(d.data.data());
  }
}
BENCHMARK(BM_Dilate)->Arg(1)->Arg(3);

void BM_ConnectedComponents(benchmark::State& state) {
  BinaryMask m = generate_case(bench_spec(), 7).gt;
  for (auto _ : state) {
    ComponentLabels labels = connected_components(m, 6);
    benchmark::DoNotOptimize(labels.labels.data());
  }
}
BENCHMARK(BM_ConnectedComponents);

void BM_SpatialTransform(benchmark::State& state) {
  BinaryMask m = generate_case(bench_spec(), 7).gt;
  SpatialTransformParams params;
  params.rotation_deg = {10, -5, 3};
  params.scale = 1.1;
  params.translation = {1, -2, 0};
  for (auto _ : state) {
    BinaryMask t = spatial_transform(m, params);
    benchmark::DoNotOptimize(t.data.data());
  }
}
BENCHMARK(BM_SpatialTransform);

}  // namespace
