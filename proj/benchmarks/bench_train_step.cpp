#include <benchmark/benchmark.h>

#include "vseg/phantom.hpp"
#include "vseg/ssn.hpp"
#include "vseg/weaklabel.hpp"

namespace {

using namespace vseg;

void BM_TrainEpoch(benchmark::State& state) {
  PhantomSpec spec;
  spec.family = PhantomFamily::kBifurcatedTube;
  spec.dims = {32, 32, 32};
  PhantomCase c = generate_case(spec, 11);
  AnnotationScheme scheme;
  TriLabelMask weak = compose_weak_label(c.gt, scheme, 3);

  UNetConfig net = UNetConfig::make(2, 8);
  SSNTrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 1;
  std::vector<std::pair<VolumeImage, TriLabelMask>> cases{{c.image, weak}};
  for (auto _ : state) {
    SSNModel model = train_ssn(cases, net, tcfg);
    benchmark::DoNotOptimize(model.params.params.data());
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  PhantomSpec spec;
  spec.dims = {32, 32, 32};
  PhantomCase c = generate_case(spec, 11);
  AnnotationScheme scheme;
  TriLabelMask weak = compose_weak_label(c.gt, scheme, 3);
  UNetConfig net = UNetConfig::make(2, 8);
  SSNTrainConfig tcfg;
  tcfg.epochs = 1;
  std::vector<std::pair<VolumeImage, TriLabelMask>> cases{{c.image, weak}};
  SSNModel model = train_ssn(cases, net, tcfg);
  for (auto _ : state) {
    auto [p, m] = predict_ssn(model, c.image);
    benchmark::DoNotOptimize(p.data.data());
  }
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

}  // namespace
