#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vseg/net.hpp"
#include "vseg/volume.hpp"

namespace vseg {

struct SSNTrainConfig {
  int epochs = 40;
  double lr_start = 1e-2;
  double lr_end = 1e-3;
  double momentum = 0.9;
  int batch_size = 2;
  uint64_t seed = 1;

  void validate() const;
  bool operator==(const SSNTrainConfig&) const = default;
};

struct SSNModel {
  UNetConfig cfg;
  UNetParameters<float> params;
  std::vector<double> training_history;  // mean loss per completed epoch
};

/// One supervision term per case: (labels, weight) pairs summed into the loss.
struct WeightedLabels {
  std::vector<std::pair<const TriLabelMask*, double>> terms;
};

/// Trains from scratch on weak labels with the poly learning-rate schedule.
/// Epoch order and batch composition derive from the seed.
SSNModel train_ssn(const std::vector<std::pair<VolumeImage, TriLabelMask>>& cases,
                   const UNetConfig& cfg, const SSNTrainConfig& tcfg);

/// Continues training an existing model at a constant learning rate with a
/// weighted sum of label terms per case (the iterative-update path).
void train_ssn_terms(SSNModel& model, const std::vector<const VolumeImage*>& images,
                     const std::vector<WeightedLabels>& supervision, int epochs, double lr,
                     double momentum, int batch_size, uint64_t seed);

/// P = sigmoid(logits); M = 1(P > 0.5), strictly.
std::pair<ProbabilityVolume, BinaryMask> predict_ssn(const SSNModel& model,
                                                     const VolumeImage& image);

}  // namespace vseg
