#include "vseg/weaklabel.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <stdexcept>

#include "vseg/rng.hpp"

namespace vseg {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Components2D {
  std::vector<int32_t> labels;
  int count = 0;
};

// 4-connected in-plane components, scan-order numbering (matches the planar
// structuring element convention).
Components2D components_2d(const Mask2D& m) {
  Components2D out;
  out.labels.assign(m.data.size(), 0);
  std::deque<std::pair<int, int>> queue;
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      std::size_t i = static_cast<std::size_t>(y) * m.width + x;
      if (!m.data[i] || out.labels[i]) continue;
      int32_t label = ++out.count;
      out.labels[i] = label;
      queue.push_back({y, x});
      while (!queue.empty()) {
        auto [cy, cx] = queue.front();
        queue.pop_front();
        for (int k = 0; k < 4; ++k) {
          int yy = cy + kDy[k], xx = cx + kDx[k];
          if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width) continue;
          std::size_t j = static_cast<std::size_t>(yy) * m.width + xx;
          if (m.data[j] && !out.labels[j]) {
            out.labels[j] = label;
            queue.push_back({yy, xx});
          }
        }
      }
    }
  }
  return out;
}

Mask2D dilate_2d(const Mask2D& m, int iterations) {
  Mask2D cur = m;
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};
  for (int it = 0; it < iterations; ++it) {
    Mask2D next = cur;
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (cur.at(y, x)) continue;
        for (int k = 0; k < 4; ++k) {
          int yy = y + kDy[k], xx = x + kDx[k];
          if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width) continue;
          if (cur.at(yy, xx)) {
            next.at(y, x) = 1;
            break;
          }
        }
      }
    }
    cur = next;
  }
  return cur;
}

// Boundary = mask voxels with some 4-neighbor outside the mask (slice border
// counts as outside).
Mask2D boundary_2d(const Mask2D& m) {
  Mask2D out = Mask2D::zeros(m.height, m.width);
  constexpr int kDy[4] = {-1, 1, 0, 0};
  constexpr int kDx[4] = {0, 0, -1, 1};
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      for (int k = 0; k < 4; ++k) {
        int yy = y + kDy[k], xx = x + kDx[k];
        if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width || !m.at(yy, xx)) {
          out.at(y, x) = 1;
          break;
        }
      }
    }
  }
  return out;
}

struct TightBox2 {
  int y0, x0, y1, x1;
};

TightBox2 tight_box_2d(const Mask2D& m) {
  TightBox2 b{m.height, m.width, -1, -1};
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      b.y0 = std::min(b.y0, y);
      b.x0 = std::min(b.x0, x);
      b.y1 = std::max(b.y1, y);
      b.x1 = std::max(b.x1, x);
    }
  }
  return b;
}

}  // namespace

std::size_t Mask2D::foreground_count() const {
  std::size_t n = 0;
  for (uint8_t v : data) n += v;
  return n;
}

Mask2D slice_of(const BinaryMask& mask, int z) {
  Mask2D s = Mask2D::zeros(mask.dims[1], mask.dims[2]);
  std::copy_n(mask.data.begin() + mask.index(z, 0, 0), s.data.size(), s.data.begin());
  return s;
}

void AnnotationScheme::validate() const {
  if (!(ratio > 0.0) || ratio > 1.0) throw std::invalid_argument("scheme ratio must be in (0,1]");
  if (loose_offset_min < 0 || loose_offset_max < loose_offset_min) {
    throw std::invalid_argument("scheme loose offset range is empty");
  }
  if (dilation_min < 1 || dilation_max < dilation_min) {
    throw std::invalid_argument("scheme dilation range is empty");
  }
  if (scribble_width < 1 || scribble_width % 2 == 0) {
    throw std::invalid_argument("scheme scribble width must be odd and >= 1");
  }
  if (endpoint_margin < 0) throw std::invalid_argument("scheme endpoint margin must be >= 0");
}

std::vector<int> select_slices(const BinaryMask& gt, double ratio, uint64_t seed) {
  if (!(ratio > 0.0) || ratio > 1.0) throw std::invalid_argument("ratio must be in (0,1]");
  std::vector<int> fg_slices;
  for (int z = 0; z < gt.dims[0]; ++z) {
    const uint8_t* row = gt.data.data() + gt.index(z, 0, 0);
    std::size_t n = static_cast<std::size_t>(gt.dims[1]) * gt.dims[2];
    for (std::size_t i = 0; i < n; ++i) {
      if (row[i]) {
        fg_slices.push_back(z);
        break;
      }
    }
  }
  if (fg_slices.empty()) throw std::invalid_argument("select_slices: mask has no foreground");
  if (fg_slices.size() == 1) return fg_slices;

  int total = static_cast<int>(fg_slices.size());
  int count = std::max<int>(2, static_cast<int>(std::llround(ratio * total)));
  count = std::min(count, total);

  std::vector<int> selected{fg_slices.front(), fg_slices.back()};
  std::vector<int> interior(fg_slices.begin() + 1, fg_slices.end() - 1);
  Rng rng(seed);
  int wanted = count - 2;
  for (int i = 0; i < wanted; ++i) {  // partial Fisher-Yates
    int j = static_cast<int>(rng.uniform_int(i, static_cast<int64_t>(interior.size()) - 1));
    std::swap(interior[i], interior[j]);
    selected.push_back(interior[i]);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

LongAxisInfo long_axis_scribble_info(const Mask2D& slice_fg, const AnnotationScheme& scheme,
                                     uint64_t seed) {
  if (slice_fg.foreground_count() == 0) {
    throw std::invalid_argument("long_axis_scribble: slice has no foreground");
  }
  Rng rng(seed);
  Components2D comps = components_2d(slice_fg);
  int chosen = 1 + static_cast<int>(rng.uniform_int(0, comps.count - 1));

  LongAxisInfo info;
  info.component = chosen;

  double cy = 0, cx = 0;
  std::size_t n = 0;
  for (int y = 0; y < slice_fg.height; ++y) {
    for (int x = 0; x < slice_fg.width; ++x) {
      if (comps.labels[static_cast<std::size_t>(y) * slice_fg.width + x] != chosen) continue;
      cy += y;
      cx += x;
      ++n;
    }
  }
  cy /= static_cast<double>(n);
  cx /= static_cast<double>(n);
  info.center_y = cy;
  info.center_x = cx;

  auto in_component = [&](int y, int x) {
    if (y < 0 || y >= slice_fg.height || x < 0 || x >= slice_fg.width) return false;
    return comps.labels[static_cast<std::size_t>(y) * slice_fg.width + x] == chosen;
  };
  auto round_px = [](double v) { return static_cast<int>(std::llround(v)); };

  int p0y = round_px(cy), p0x = round_px(cx);
  if (!in_component(p0y, p0x)) {
    // Concave component with the mass center outside: fall back to the
    // in-component pixel nearest the center.
    double best = 1e300;
    PixelYX best_px{0, 0};
    for (int y = 0; y < slice_fg.height; ++y) {
      for (int x = 0; x < slice_fg.width; ++x) {
        if (!in_component(y, x)) continue;
        double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        if (d2 < best) {
          best = d2;
          best_px = {y, x};
        }
      }
    }
    info.pixels = {best_px};
    return info;
  }

  int best_angle = 0, best_len = -1, best_pos = 0, best_neg = 0;
  for (int k = 0; k < 6; ++k) {
    double theta = k * 30.0 * kPi / 180.0;
    double dy = std::sin(theta), dx = std::cos(theta);
    int pos = 0;
    while (in_component(round_px(cy + (pos + 1) * dy), round_px(cx + (pos + 1) * dx))) ++pos;
    int neg = 0;
    while (in_component(round_px(cy - (neg + 1) * dy), round_px(cx - (neg + 1) * dx))) ++neg;
    int len = pos + neg;
    if (len > best_len) {
      best_len = len;
      best_angle = k;
      best_pos = pos;
      best_neg = neg;
    }
  }
  info.angle_index = best_angle;
  info.reach_pos = best_pos;
  info.reach_neg = best_neg;

  double theta = best_angle * 30.0 * kPi / 180.0;
  double dy = std::sin(theta), dx = std::cos(theta);
  double ny = dx, nx = -dy;  // perpendicular (90-degree rotation)

  int m = scheme.endpoint_margin;
  int t_hi = best_pos - m, t_lo = -(best_neg - m);
  std::set<PixelYX> pixels;
  if (t_hi < t_lo) {
    pixels.insert({p0y, p0x});  // retraction exhausted the segment
  } else {
    int half_width = (scheme.scribble_width - 1) / 2;
    for (int t = t_lo; t <= t_hi; ++t) {
      for (int o = -half_width; o <= half_width; ++o) {
        int qy = round_px(cy + t * dy + o * ny);
        int qx = round_px(cx + t * dx + o * nx);
        if (in_component(qy, qx)) pixels.insert({qy, qx});
      }
    }
    if (pixels.empty()) pixels.insert({p0y, p0x});
  }
  info.pixels.assign(pixels.begin(), pixels.end());
  return info;
}

std::vector<PixelYX> long_axis_scribble(const Mask2D& slice_fg, const AnnotationScheme& scheme,
                                        uint64_t seed) {
  return long_axis_scribble_info(slice_fg, scheme, seed).pixels;
}

LooseBox2 loose_box(const Mask2D& region, const AnnotationScheme& scheme, uint64_t seed) {
  TightBox2 tight = tight_box_2d(region);
  if (tight.y1 < tight.y0) throw std::invalid_argument("loose_box: region is empty");
  Rng rng(seed);
  int off_y0 = static_cast<int>(rng.uniform_int(scheme.loose_offset_min, scheme.loose_offset_max));
  int off_y1 = static_cast<int>(rng.uniform_int(scheme.loose_offset_min, scheme.loose_offset_max));
  int off_x0 = static_cast<int>(rng.uniform_int(scheme.loose_offset_min, scheme.loose_offset_max));
  int off_x1 = static_cast<int>(rng.uniform_int(scheme.loose_offset_min, scheme.loose_offset_max));
  LooseBox2 box;
  box.y0 = tight.y0 - off_y0;
  box.y1 = tight.y1 + off_y1;
  box.x0 = tight.x0 - off_x0;
  box.x1 = tight.x1 + off_x1;
  box.clamped = box.y0 < 0 || box.x0 < 0 || box.y1 > region.height - 1 || box.x1 > region.width - 1;
  box.y0 = std::max(box.y0, 0);
  box.x0 = std::max(box.x0, 0);
  box.y1 = std::min(box.y1, region.height - 1);
  box.x1 = std::min(box.x1, region.width - 1);
  return box;
}

HybridSliceLabel hybrid_slice_label(const Mask2D& slice_fg, int z, const AnnotationScheme& scheme,
                                    uint64_t seed) {
  HybridSliceLabel label;
  label.slice_index = z;
  label.scribble_pixels = long_axis_scribble(slice_fg, scheme, mix_seed(seed, 0xA1));
  // The box encircles all foreground pixels of the slice, not only the
  // scribbled component, so outside-box background labels stay sound.
  label.box = loose_box(slice_fg, scheme, mix_seed(seed, 0xB2));
  return label;
}

TriLabelMask compose_weak_label(const BinaryMask& gt, const AnnotationScheme& scheme,
                                uint64_t seed) {
  scheme.validate();
  gt.validate();
  if (gt.empty_foreground()) {
    throw std::invalid_argument("compose_weak_label: ground truth has no foreground");
  }

  TriLabelMask out = TriLabelMask::unlabeled(gt.dims, gt.spacing);
  std::vector<int> selected = select_slices(gt, scheme.ratio, mix_seed(seed, 0x51));
  int z_min = selected.front(), z_max = selected.back();

  const std::size_t slice_px = static_cast<std::size_t>(gt.dims[1]) * gt.dims[2];
  for (int z = 0; z < gt.dims[0]; ++z) {
    if (z < z_min || z > z_max) {
      std::fill_n(out.data.begin() + out.index(z, 0, 0), slice_px, uint8_t{0});
    }
  }

  for (int z : selected) {
    Mask2D slice = slice_of(gt, z);
    uint64_t slice_seed = mix_seed(seed, 0x1000 + static_cast<uint64_t>(z));
    switch (scheme.kind) {
      case AnnotationKind::kHybrid: {
        HybridSliceLabel label = hybrid_slice_label(slice, z, scheme, slice_seed);
        for (int y = 0; y < gt.dims[1]; ++y) {
          for (int x = 0; x < gt.dims[2]; ++x) {
            if (!label.box.contains(y, x)) out.at(z, y, x) = 0;
          }
        }
        for (const PixelYX& p : label.scribble_pixels) out.at(z, p.y, p.x) = 1;
        break;
      }
      case AnnotationKind::kScribbleStar: {
        HybridSliceLabel label = hybrid_slice_label(slice, z, scheme, slice_seed);
        // Background: a ring of `scribble_width` pixels hugging the loose box
        // from the outside. Keeping it outside the box makes hybrid's labeled
        // set a strict superset of this one.
        for (int y = 0; y < gt.dims[1]; ++y) {
          for (int x = 0; x < gt.dims[2]; ++x) {
            if (label.box.contains(y, x)) continue;
            int dy = y < label.box.y0 ? label.box.y0 - y : (y > label.box.y1 ? y - label.box.y1 : 0);
            int dx = x < label.box.x0 ? label.box.x0 - x : (x > label.box.x1 ? x - label.box.x1 : 0);
            if (std::max(dy, dx) <= scheme.scribble_width) out.at(z, y, x) = 0;
          }
        }
        for (const PixelYX& p : label.scribble_pixels) out.at(z, p.y, p.x) = 1;
        break;
      }
      case AnnotationKind::kScribbleDilation: {
        std::vector<PixelYX> scribble =
            long_axis_scribble(slice, scheme, mix_seed(slice_seed, 0xA1));
        int iters = static_cast<int>(
            Rng(mix_seed(slice_seed, 0xD7)).uniform_int(scheme.dilation_min, scheme.dilation_max));
        Mask2D curve = boundary_2d(dilate_2d(slice, iters));
        int half_width = (scheme.scribble_width - 1) / 2;
        if (half_width > 0) curve = dilate_2d(curve, half_width);
        for (int y = 0; y < gt.dims[1]; ++y) {
          for (int x = 0; x < gt.dims[2]; ++x) {
            if (curve.at(y, x)) out.at(z, y, x) = 0;
          }
        }
        for (const PixelYX& p : scribble) out.at(z, p.y, p.x) = 1;
        break;
      }
      case AnnotationKind::kTightBoxOnly: {
        TightBox2 tight = tight_box_2d(slice);
        for (int y = 0; y < gt.dims[1]; ++y) {
          for (int x = 0; x < gt.dims[2]; ++x) {
            if (y < tight.y0 || y > tight.y1 || x < tight.x0 || x > tight.x1) {
              out.at(z, y, x) = 0;
            }
          }
        }
        break;
      }
    }
  }
  return out;
}

}  // namespace vseg
