#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vseg/net.hpp"
#include "vseg/volume.hpp"

namespace vseg {

/// Clean shape representation selected from training-split predictions.
struct ShapeTemplate {
  BinaryMask mask;
  int source_case_id = -1;
  double confidence = 0.0;
};

/// Noise model for the denoiser's training draws: the three error imitations
/// (closing, boundary-seeded dilation, marginal-slice extension) corrupt the
/// input only; a spatial transform, when it fires, moves input and target
/// together.
struct NoiseAugConfig {
  bool enable_closing = true;
  bool enable_dilation = true;
  bool enable_extension = true;
  std::array<int, 2> closing_iters{1, 3};
  std::array<int, 2> dilation_iters{1, 4};
  bool dilation_planar = false;
  std::array<int, 2> extension_slices{1, 3};
  double spatial_prob = 0.2;
  double op_prob = 0.5;  // each enabled noise op fires independently per draw
  double rotation_deg = 15.0;
  double scale_min = 0.85;
  double scale_max = 1.15;
  int translation_voxels = 4;
  uint64_t seed = 0;

  void validate() const;
  bool operator==(const NoiseAugConfig&) const = default;
};

struct SDNModel {
  UNetConfig cfg;
  UNetParameters<float> params;
  bool frozen = false;
};

struct Prediction {
  int case_id = 0;
  ProbabilityVolume p;
  BinaryMask m;
};

/// Mean probability over voxels with p > 0.5; zero when none exceed 0.5.
double mask_confidence(const ProbabilityVolume& p);

/// Predictions with non-empty masks sorted by descending confidence (ties
/// break toward the lower case id); returns the rank-th (1-based). Throws
/// NoTemplateError when every mask is empty.
ShapeTemplate select_template(const std::vector<Prediction>& predictions, int rank = 1);

struct AugmentedPair {
  BinaryMask input;   // corrupted
  BinaryMask target;  // clean (possibly transformed) shape
  bool transformed = false;
  SpatialTransformParams transform;  // valid when transformed
};

/// Deterministic in draw_seed. Noise ops never delete target foreground from
/// the input (all three only grow).
AugmentedPair augment_shape(const ShapeTemplate& tmpl, const NoiseAugConfig& cfg,
                            uint64_t draw_seed);

/// Denoising-autoencoder training: each epoch draws one fresh corrupted pair
/// and takes one SGD step (constant lr) against the plain cross-entropy. The
/// returned model is frozen.
SDNModel train_sdn(const ShapeTemplate& tmpl, const UNetConfig& cfg, const NoiseAugConfig& aug,
                   int epochs, double lr, double momentum = 0.9);

/// Same, cycling several templates across steps (confidence-rank analysis).
SDNModel train_sdn_multi(const std::vector<ShapeTemplate>& templates, const UNetConfig& cfg,
                         const NoiseAugConfig& aug, int epochs, double lr, double momentum = 0.9);

/// P_d = sigmoid(F(mask)); M_d = 1(P_d > 0.5), strictly.
std::pair<ProbabilityVolume, BinaryMask> denoise(const SDNModel& model, const BinaryMask& m);

}  // namespace vseg
