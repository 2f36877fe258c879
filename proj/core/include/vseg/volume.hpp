#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace vseg {

/// Extents ordered (D, H, W) = (z, y, x).
using Dims3 = std::array<int, 3>;
/// Physical voxel spacing (sz, sy, sx) in millimeters.
using Spacing3 = std::array<double, 3>;

inline std::size_t voxel_count(const Dims3& d) {
  return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) *
         static_cast<std::size_t>(d[2]);
}

/// Distinguished code for unlabeled voxels in TriLabelMask.
inline constexpr uint8_t kUnlabeled = 255;

/// Dense scalar volume, (z, y, x) row-major.
struct VolumeImage {
  std::vector<float> data;
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};

  static VolumeImage zeros(const Dims3& d, const Spacing3& s = {1.0, 1.0, 1.0});

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
  }
  float& at(int z, int y, int x) { return data[index(z, y, x)]; }
  float at(int z, int y, int x) const { return data[index(z, y, x)]; }

  /// Throws std::invalid_argument when dims/spacing/data length disagree.
  void validate() const;
};

/// Hard segmentation, every voxel 0 or 1.
struct BinaryMask {
  std::vector<uint8_t> data;
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};

  static BinaryMask zeros(const Dims3& d, const Spacing3& s = {1.0, 1.0, 1.0});

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
  }
  uint8_t& at(int z, int y, int x) { return data[index(z, y, x)]; }
  uint8_t at(int z, int y, int x) const { return data[index(z, y, x)]; }

  std::size_t foreground_count() const;
  bool empty_foreground() const { return foreground_count() == 0; }

  void validate() const;
};

/// Per-voxel label over {0, 1, kUnlabeled}.
struct TriLabelMask {
  std::vector<uint8_t> data;
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};

  /// All-unlabeled mask.
  static TriLabelMask unlabeled(const Dims3& d, const Spacing3& s = {1.0, 1.0, 1.0});

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
  }
  uint8_t& at(int z, int y, int x) { return data[index(z, y, x)]; }
  uint8_t at(int z, int y, int x) const { return data[index(z, y, x)]; }

  std::size_t labeled_count() const;

  void validate() const;
};

/// Per-voxel foreground confidence in [0, 1].
struct ProbabilityVolume {
  std::vector<float> data;
  Dims3 dims{0, 0, 0};
  Spacing3 spacing{1.0, 1.0, 1.0};

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x;
  }
  float& at(int z, int y, int x) { return data[index(z, y, x)]; }
  float at(int z, int y, int x) const { return data[index(z, y, x)]; }
};

/// Inclusive voxel box. May extend past the owning volume when used for
/// padded cropping.
struct BoundingBox3 {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{-1, -1, -1};

  Dims3 extents() const {
    return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
  }
  bool valid() const { return hi[0] >= lo[0] && hi[1] >= lo[1] && hi[2] >= lo[2]; }
  static BoundingBox3 full(const Dims3& d) { return {{0, 0, 0}, {d[0] - 1, d[1] - 1, d[2] - 1}}; }

  /// Box that maps the cropped volume back onto `full_dims`:
  /// crop_to_box(crop_to_box(v, b, f), b.inverse(v.dims), f) restores the
  /// in-bounds region of v exactly.
  BoundingBox3 inverse(const Dims3& full_dims) const {
    BoundingBox3 inv;
    for (int a = 0; a < 3; ++a) {
      inv.lo[a] = -lo[a];
      inv.hi[a] = inv.lo[a] + full_dims[a] - 1;
    }
    return inv;
  }
};

/// Hard-thresholds a probability volume with strict `>`.
BinaryMask threshold_above(const ProbabilityVolume& p, float threshold);

enum class Interp { kNearest, kTrilinear };

/// Resamples to `target` spacing. Output extents are round(dim*spacing/target),
/// at least 1 per axis. The voxel-center convention maps output index i to the
/// continuous input index (i + 0.5)*target/spacing - 0.5; trilinear clamps at
/// edges, nearest rounds half away from zero.
VolumeImage resample(const VolumeImage& vol, const Spacing3& target,
                     Interp mode = Interp::kTrilinear);
/// Masks always resample nearest.
BinaryMask resample(const BinaryMask& mask, const Spacing3& target);
TriLabelMask resample(const TriLabelMask& mask, const Spacing3& target);

/// Copies `box` out of `vol`; regions of the box outside the volume are
/// filled with `fill`. The box may lie entirely outside.
VolumeImage crop_to_box(const VolumeImage& vol, const BoundingBox3& box, float fill);
BinaryMask crop_to_box(const BinaryMask& vol, const BoundingBox3& box, uint8_t fill);
TriLabelMask crop_to_box(const TriLabelMask& vol, const BoundingBox3& box, uint8_t fill);
ProbabilityVolume crop_to_box(const ProbabilityVolume& vol, const BoundingBox3& box, float fill);

enum class MorphOp { kDilate, kErode, kClose };

/// Binary morphology with a unit-radius structuring element applied
/// `iterations` times. connectivity 6 uses face neighbors, 26 the full 3x3x3
/// shell; planar restricts the element to in-slice neighbors (4 or 8).
/// Out-of-volume voxels count as background for dilation and foreground for
/// erosion, so m subseteq close(m) holds everywhere. close = erode(dilate(m, k), k).
BinaryMask morph(const BinaryMask& mask, MorphOp op, int iterations, int connectivity,
                 bool planar = false);

struct ComponentLabels {
  std::vector<int32_t> labels;  // 0 = background, components numbered 1..count
  Dims3 dims{0, 0, 0};
  int count = 0;

  int32_t at(int z, int y, int x) const {
    return labels[(static_cast<std::size_t>(z) * dims[1] + y) * dims[2] + x];
  }
};

/// Labels connected foreground components 1..count in first-encounter scan
/// order (z, then y, then x).
ComponentLabels connected_components(const BinaryMask& mask, int connectivity);

struct SpatialTransformParams {
  std::array<double, 3> rotation_deg{0.0, 0.0, 0.0};  // about (z, y, x) axes
  std::array<double, 3> translation{0.0, 0.0, 0.0};   // voxels, (z, y, x)
  double scale = 1.0;

  bool is_identity() const {
    return rotation_deg == std::array<double, 3>{0, 0, 0} &&
           translation == std::array<double, 3>{0, 0, 0} && scale == 1.0;
  }
};

/// Rigid-plus-scale resampling of a binary mask, nearest-neighbor, rotation
/// and scaling about the volume center. Forward map: p' = s*R*(p-c) + c + t;
/// voxels are inverse-mapped so the output stays binary.
BinaryMask spatial_transform(const BinaryMask& mask, const SpatialTransformParams& params);

/// Union bounding box of labeled (non-unlabeled) voxels; invalid() when none.
BoundingBox3 labeled_bounding_box(const TriLabelMask& mask);
BoundingBox3 foreground_bounding_box(const BinaryMask& mask);

/// Scales a box about its center: new extents are round(scale*extent), at
/// least 1; any odd padding goes to the low side.
BoundingBox3 scale_box(const BoundingBox3& box, double scale);

struct PriorCropResult {
  std::vector<std::pair<VolumeImage, TriLabelMask>> cases;
  BoundingBox3 box;      // in the center-aligned common coordinate frame
  Dims3 common_dims{0, 0, 0};
  std::vector<std::array<int, 3>> case_offsets;  // per-case shift into the common frame
};

/// Center-aligns all cases in a common frame (padding images with 0 and labels
/// with background), takes the union bounding box of labeled voxels across
/// cases, scales it by `scale` about its center, optionally rounds the extents
/// up to per-axis multiples (for downstream stride constraints), and crops
/// every case to that box. All outputs share identical dims.
PriorCropResult prior_crop_dataset(const std::vector<std::pair<VolumeImage, TriLabelMask>>& cases,
                                   double scale = 1.2,
                                   const Dims3& round_up_multiple = {1, 1, 1});

}  // namespace vseg
