#pragma once

#include <cstdint>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

enum class PhantomFamily { kTube, kBifurcatedTube, kEllipsoid, kLobedEllipsoid };

/// Parametric synthetic structure with ground truth, plus an optional
/// distractor of matching intensity placed next to the target to provoke
/// wrongly-attached segmentations.
struct PhantomSpec {
  PhantomFamily family = PhantomFamily::kEllipsoid;
  Dims3 dims{32, 32, 32};
  Spacing3 spacing{1.0, 1.0, 1.0};
  double size_min = 0.35;  // fraction of per-axis extent
  double size_max = 0.55;
  float fg_mean = 1.0f;
  float fg_jitter = 0.05f;
  float bg_mean = 0.0f;
  float bg_jitter = 0.05f;
  bool neighbor = false;
  float noise_sigma = 0.0f;

  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

struct PhantomCase {
  VolumeImage image;
  BinaryMask gt;
  int case_id = 0;
  uint64_t seed = 0;
};

/// Deterministic in (spec, seed). The ground truth is one 6-connected
/// component, keeps a 2-voxel margin to the volume boundary, and for the
/// bifurcated family has at least one lower-half slice with two in-plane
/// components.
PhantomCase generate_case(const PhantomSpec& spec, uint64_t seed, int case_id = 0);

struct PhantomDataset {
  std::vector<PhantomCase> train, val, test;
};

/// Split seeds derive from the master seed by fixed offsets, so splits are
/// disjoint by construction and reproducible.
PhantomDataset generate_dataset(const PhantomSpec& spec, int n_train, int n_val, int n_test,
                                uint64_t seed);

}  // namespace vseg
