#pragma once

#include <cstdint>
#include <vector>

#include "vseg/volume.hpp"

namespace vseg {

enum class AnnotationKind { kHybrid, kScribbleStar, kScribbleDilation, kTightBoxOnly };

struct AnnotationScheme {
  AnnotationKind kind = AnnotationKind::kHybrid;
  double ratio = 0.3;        // fraction of foreground slices that get annotated
  int loose_offset_min = 10; // loose box edge distance to the tight box, per edge
  int loose_offset_max = 20;
  int dilation_min = 20;     // scribble_dilation boundary-curve iterations
  int dilation_max = 50;
  int scribble_width = 3;
  int endpoint_margin = 5;   // long-axis retraction from the component boundary

  void validate() const;
  bool operator==(const AnnotationScheme&) const = default;
};

struct PixelYX {
  int y = 0, x = 0;
  bool operator==(const PixelYX&) const = default;
  bool operator<(const PixelYX& o) const { return y != o.y ? y < o.y : x < o.x; }
};

/// One z-slice as a standalone 2D mask.
struct Mask2D {
  std::vector<uint8_t> data;
  int height = 0, width = 0;

  static Mask2D zeros(int h, int w) { return {std::vector<uint8_t>(static_cast<std::size_t>(h) * w, 0), h, w}; }
  uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t foreground_count() const;
};

Mask2D slice_of(const BinaryMask& mask, int z);

struct LooseBox2 {
  int y0 = 0, x0 = 0, y1 = -1, x1 = -1;  // inclusive
  bool clamped = false;                  // some edge hit the slice border before reaching its offset

  bool contains(int y, int x) const { return y >= y0 && y <= y1 && x >= x0 && x <= x1; }
};

struct HybridSliceLabel {
  int slice_index = 0;
  std::vector<PixelYX> scribble_pixels;
  LooseBox2 box;
};

/// Diagnostic detail of the long-axis construction.
struct LongAxisInfo {
  int component = 0;        // chosen component label (1-based scan order)
  int angle_index = 0;      // chosen among {0,30,...,150} degrees
  int reach_pos = 0;        // in-component steps from the center, +direction
  int reach_neg = 0;        //                                    -direction
  double center_y = 0, center_x = 0;
  std::vector<PixelYX> pixels;  // final scribble (width-applied, clipped)
};

/// Selected z indices: always the first and last foreground slices, plus a
/// seeded uniform draw of interior foreground slices up to
/// max(2, round(ratio * |F|)) total (1 when only one slice has foreground).
std::vector<int> select_slices(const BinaryMask& gt, double ratio, uint64_t seed);

/// Foreground scribble: the longest of six 30-degree-spaced segments through
/// the mass center of one (randomly chosen) connected component, endpoints
/// retracted by `endpoint_margin`, thickened to `scribble_width`, clipped to
/// the component. Falls back to a single near-center pixel when the segment
/// degenerates.
std::vector<PixelYX> long_axis_scribble(const Mask2D& slice_fg, const AnnotationScheme& scheme,
                                        uint64_t seed);
LongAxisInfo long_axis_scribble_info(const Mask2D& slice_fg, const AnnotationScheme& scheme,
                                     uint64_t seed);

/// Expands the tight box of the nonzero pixels of `region` by an independent
/// uniform offset in [loose_offset_min, loose_offset_max] per edge, clamping
/// at the slice border (and flagging when clamped).
LooseBox2 loose_box(const Mask2D& region, const AnnotationScheme& scheme, uint64_t seed);

/// Scribble + loose box of one selected slice (hybrid annotation).
HybridSliceLabel hybrid_slice_label(const Mask2D& slice_fg, int z, const AnnotationScheme& scheme,
                                    uint64_t seed);

/// Synthesizes the weak supervision volume for a ground-truth mask:
///  - hybrid: scribble=1, outside loose box=0, rest of the slice unlabeled;
///  - scribble_star: scribble=1, a width-wide ring hugging the loose box from
///    outside=0, everything else unlabeled;
///  - scribble_dilation: scribble=1, the boundary curve of the k-times dilated
///    foreground (k drawn per slice from dilation range)=0;
///  - tight_box_only: outside the tight box=0, inside unlabeled.
/// For every kind, unselected slices inside the foreground z-range stay fully
/// unlabeled and slices beyond the range are all background.
TriLabelMask compose_weak_label(const BinaryMask& gt, const AnnotationScheme& scheme,
                                uint64_t seed);

}  // namespace vseg
