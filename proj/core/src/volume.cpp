#include "vseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

namespace vseg {

namespace {

void check_dims(const Dims3& d) {
  if (d[0] <= 0 || d[1] <= 0 || d[2] <= 0) {
    throw std::invalid_argument("volume dims must be positive");
  }
}

void check_spacing(const Spacing3& s) {
  for (double v : s) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("spacing components must be finite and > 0");
    }
  }
}

}  // namespace

VolumeImage VolumeImage::zeros(const Dims3& d, const Spacing3& s) {
  check_dims(d);
  check_spacing(s);
  VolumeImage v;
  v.dims = d;
  v.spacing = s;
  v.data.assign(voxel_count(d), 0.0f);
  return v;
}

void VolumeImage::validate() const {
  check_dims(dims);
  check_spacing(spacing);
  if (data.size() != voxel_count(dims)) {
    throw std::invalid_argument("image data length does not match dims");
  }
}

BinaryMask BinaryMask::zeros(const Dims3& d, const Spacing3& s) {
  check_dims(d);
  check_spacing(s);
  BinaryMask m;
  m.dims = d;
  m.spacing = s;
  m.data.assign(voxel_count(d), 0);
  return m;
}

std::size_t BinaryMask::foreground_count() const {
  std::size_t n = 0;
  for (uint8_t v : data) n += v;
  return n;
}

void BinaryMask::validate() const {
  check_dims(dims);
  check_spacing(spacing);
  if (data.size() != voxel_count(dims)) {
    throw std::invalid_argument("mask data length does not match dims");
  }
  for (uint8_t v : data) {
    if (v > 1) throw std::invalid_argument("binary mask voxel outside {0,1}");
  }
}

TriLabelMask TriLabelMask::unlabeled(const Dims3& d, const Spacing3& s) {
  check_dims(d);
  check_spacing(s);
  TriLabelMask m;
  m.dims = d;
  m.spacing = s;
  m.data.assign(voxel_count(d), kUnlabeled);
  return m;
}

std::size_t TriLabelMask::labeled_count() const {
  std::size_t n = 0;
  for (uint8_t v : data) n += (v != kUnlabeled);
  return n;
}

void TriLabelMask::validate() const {
  check_dims(dims);
  check_spacing(spacing);
  if (data.size() != voxel_count(dims)) {
    throw std::invalid_argument("label data length does not match dims");
  }
  for (uint8_t v : data) {
    if (v != 0 && v != 1 && v != kUnlabeled) {
      throw std::invalid_argument("tri-label voxel outside {0,1,unlabeled}");
    }
  }
}

BinaryMask threshold_above(const ProbabilityVolume& p, float threshold) {
  BinaryMask m = BinaryMask::zeros(p.dims, p.spacing);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    m.data[i] = p.data[i] > threshold ? 1 : 0;
  }
  return m;
}

namespace {

Dims3 resampled_dims(const Dims3& dims, const Spacing3& spacing, const Spacing3& target) {
  Dims3 out;
  for (int a = 0; a < 3; ++a) {
    out[a] = std::max<int>(1, static_cast<int>(std::llround(dims[a] * spacing[a] / target[a])));
  }
  return out;
}

// Continuous input index for output index i under the voxel-center convention.
inline double source_coord(int i, double target, double spacing) {
  return (i + 0.5) * target / spacing - 0.5;
}

template <typename T>
std::vector<T> resample_nearest(const std::vector<T>& in, const Dims3& dims,
                                const Spacing3& spacing, const Spacing3& target,
                                const Dims3& out_dims) {
  std::vector<T> out(voxel_count(out_dims));
  std::size_t o = 0;
  for (int z = 0; z < out_dims[0]; ++z) {
    int sz = std::clamp<int>(static_cast<int>(std::llround(source_coord(z, target[0], spacing[0]))),
                             0, dims[0] - 1);
    for (int y = 0; y < out_dims[1]; ++y) {
      int sy = std::clamp<int>(
          static_cast<int>(std::llround(source_coord(y, target[1], spacing[1]))), 0, dims[1] - 1);
      for (int x = 0; x < out_dims[2]; ++x, ++o) {
        int sx = std::clamp<int>(
            static_cast<int>(std::llround(source_coord(x, target[2], spacing[2]))), 0, dims[2] - 1);
        out[o] = in[(static_cast<std::size_t>(sz) * dims[1] + sy) * dims[2] + sx];
      }
    }
  }
  return out;
}

}  // namespace

VolumeImage resample(const VolumeImage& vol, const Spacing3& target, Interp mode) {
  vol.validate();
  check_spacing(target);
  Dims3 out_dims = resampled_dims(vol.dims, vol.spacing, target);
  VolumeImage out;
  out.dims = out_dims;
  out.spacing = target;
  if (mode == Interp::kNearest) {
    out.data = resample_nearest(vol.data, vol.dims, vol.spacing, target, out_dims);
    return out;
  }
  out.data.resize(voxel_count(out_dims));
  const Dims3& d = vol.dims;
  std::size_t o = 0;
  for (int z = 0; z < out_dims[0]; ++z) {
    double cz = source_coord(z, target[0], vol.spacing[0]);
    int z0 = std::clamp<int>(static_cast<int>(std::floor(cz)), 0, d[0] - 1);
    int z1 = std::min(z0 + 1, d[0] - 1);
    double fz = std::clamp(cz - z0, 0.0, 1.0);
    for (int y = 0; y < out_dims[1]; ++y) {
      double cy = source_coord(y, target[1], vol.spacing[1]);
      int y0 = std::clamp<int>(static_cast<int>(std::floor(cy)), 0, d[1] - 1);
      int y1 = std::min(y0 + 1, d[1] - 1);
      double fy = std::clamp(cy - y0, 0.0, 1.0);
      for (int x = 0; x < out_dims[2]; ++x, ++o) {
        double cx = source_coord(x, target[2], vol.spacing[2]);
        int x0 = std::clamp<int>(static_cast<int>(std::floor(cx)), 0, d[2] - 1);
        int x1 = std::min(x0 + 1, d[2] - 1);
        double fx = std::clamp(cx - x0, 0.0, 1.0);
        auto v = [&](int zz, int yy, int xx) { return static_cast<double>(vol.at(zz, yy, xx)); };
        double c00 = v(z0, y0, x0) * (1 - fx) + v(z0, y0, x1) * fx;
        double c01 = v(z0, y1, x0) * (1 - fx) + v(z0, y1, x1) * fx;
        double c10 = v(z1, y0, x0) * (1 - fx) + v(z1, y0, x1) * fx;
        double c11 = v(z1, y1, x0) * (1 - fx) + v(z1, y1, x1) * fx;
        double c0 = c00 * (1 - fy) + c01 * fy;
        double c1 = c10 * (1 - fy) + c11 * fy;
        out.data[o] = static_cast<float>(c0 * (1 - fz) + c1 * fz);
      }
    }
  }
  return out;
}

BinaryMask resample(const BinaryMask& mask, const Spacing3& target) {
  mask.validate();
  check_spacing(target);
  Dims3 out_dims = resampled_dims(mask.dims, mask.spacing, target);
  BinaryMask out;
  out.dims = out_dims;
  out.spacing = target;
  out.data = resample_nearest(mask.data, mask.dims, mask.spacing, target, out_dims);
  return out;
}

TriLabelMask resample(const TriLabelMask& mask, const Spacing3& target) {
  mask.validate();
  check_spacing(target);
  Dims3 out_dims = resampled_dims(mask.dims, mask.spacing, target);
  TriLabelMask out;
  out.dims = out_dims;
  out.spacing = target;
  out.data = resample_nearest(mask.data, mask.dims, mask.spacing, target, out_dims);
  return out;
}

namespace {

template <typename T, typename Vol>
std::vector<T> crop_data(const Vol& vol, const BoundingBox3& box, T fill) {
  if (!box.valid()) throw std::invalid_argument("crop box has hi < lo");
  Dims3 e = box.extents();
  std::vector<T> out(voxel_count(e), fill);
  int z0 = std::max(box.lo[0], 0), z1 = std::min(box.hi[0], vol.dims[0] - 1);
  int y0 = std::max(box.lo[1], 0), y1 = std::min(box.hi[1], vol.dims[1] - 1);
  int x0 = std::max(box.lo[2], 0), x1 = std::min(box.hi[2], vol.dims[2] - 1);
  for (int z = z0; z <= z1; ++z) {
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        std::size_t oi = (static_cast<std::size_t>(z - box.lo[0]) * e[1] + (y - box.lo[1])) * e[2] +
                         (x - box.lo[2]);
        out[oi] = vol.data[vol.index(z, y, x)];
      }
    }
  }
  return out;
}

}  // namespace

VolumeImage crop_to_box(const VolumeImage& vol, const BoundingBox3& box, float fill) {
  VolumeImage out;
  out.data = crop_data<float>(vol, box, fill);
  out.dims = box.extents();
  out.spacing = vol.spacing;
  return out;
}

BinaryMask crop_to_box(const BinaryMask& vol, const BoundingBox3& box, uint8_t fill) {
  BinaryMask out;
  out.data = crop_data<uint8_t>(vol, box, fill);
  out.dims = box.extents();
  out.spacing = vol.spacing;
  return out;
}

TriLabelMask crop_to_box(const TriLabelMask& vol, const BoundingBox3& box, uint8_t fill) {
  TriLabelMask out;
  out.data = crop_data<uint8_t>(vol, box, fill);
  out.dims = box.extents();
  out.spacing = vol.spacing;
  return out;
}

ProbabilityVolume crop_to_box(const ProbabilityVolume& vol, const BoundingBox3& box, float fill) {
  ProbabilityVolume out;
  out.data = crop_data<float>(vol, box, fill);
  out.dims = box.extents();
  out.spacing = vol.spacing;
  return out;
}

namespace {

// Unit-radius structuring element offsets.
std::vector<std::array<int, 3>> element_offsets(int connectivity, bool planar) {
  if (connectivity != 6 && connectivity != 26) {
    throw std::invalid_argument("connectivity must be 6 or 26");
  }
  std::vector<std::array<int, 3>> offs;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && dy == 0 && dx == 0) continue;
        if (planar && dz != 0) continue;
        int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
        if (connectivity == 6 && manhattan != 1) continue;
        offs.push_back({dz, dy, dx});
      }
    }
  }
  return offs;
}

BinaryMask dilate_once(const BinaryMask& m, const std::vector<std::array<int, 3>>& offs) {
  BinaryMask out = m;
  const Dims3& d = m.dims;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x) {
        if (m.at(z, y, x)) continue;
        for (const auto& o : offs) {
          int zz = z + o[0], yy = y + o[1], xx = x + o[2];
          if (zz < 0 || zz >= d[0] || yy < 0 || yy >= d[1] || xx < 0 || xx >= d[2]) continue;
          if (m.at(zz, yy, xx)) {
            out.at(z, y, x) = 1;
            break;
          }
        }
      }
    }
  }
  return out;
}

BinaryMask erode_once(const BinaryMask& m, const std::vector<std::array<int, 3>>& offs) {
  BinaryMask out = m;
  const Dims3& d = m.dims;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x) {
        if (!m.at(z, y, x)) continue;
        for (const auto& o : offs) {
          int zz = z + o[0], yy = y + o[1], xx = x + o[2];
          // Out-of-volume counts as foreground for erosion (and background for
          // dilation), so m subseteq close(m) also holds at the border.
          if (zz < 0 || zz >= d[0] || yy < 0 || yy >= d[1] || xx < 0 || xx >= d[2]) continue;
          if (!m.at(zz, yy, xx)) {
            out.at(z, y, x) = 0;
            break;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

BinaryMask morph(const BinaryMask& mask, MorphOp op, int iterations, int connectivity,
                 bool planar) {
  if (iterations < 1) throw std::invalid_argument("morph iterations must be >= 1");
  auto offs = element_offsets(connectivity, planar);
  BinaryMask cur = mask;
  switch (op) {
    case MorphOp::kDilate:
      for (int i = 0; i < iterations; ++i) cur = dilate_once(cur, offs);
      return cur;
    case MorphOp::kErode:
      for (int i = 0; i < iterations; ++i) cur = erode_once(cur, offs);
      return cur;
    case MorphOp::kClose:
      for (int i = 0; i < iterations; ++i) cur = dilate_once(cur, offs);
      for (int i = 0; i < iterations; ++i) cur = erode_once(cur, offs);
      return cur;
  }
  throw std::invalid_argument("unknown morph op");
}

ComponentLabels connected_components(const BinaryMask& mask, int connectivity) {
  auto offs = element_offsets(connectivity, false);
  ComponentLabels out;
  out.dims = mask.dims;
  out.labels.assign(mask.data.size(), 0);
  const Dims3& d = mask.dims;
  std::deque<std::array<int, 3>> queue;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x) {
        std::size_t i = mask.index(z, y, x);
        if (!mask.data[i] || out.labels[i]) continue;
        int32_t label = ++out.count;
        out.labels[i] = label;
        queue.push_back({z, y, x});
        while (!queue.empty()) {
          auto [cz, cy, cx] = queue.front();
          queue.pop_front();
          for (const auto& o : offs) {
            int zz = cz + o[0], yy = cy + o[1], xx = cx + o[2];
            if (zz < 0 || zz >= d[0] || yy < 0 || yy >= d[1] || xx < 0 || xx >= d[2]) continue;
            std::size_t j = mask.index(zz, yy, xx);
            if (mask.data[j] && !out.labels[j]) {
              out.labels[j] = label;
              queue.push_back({zz, yy, xx});
            }
          }
        }
      }
    }
  }
  return out;
}

BinaryMask spatial_transform(const BinaryMask& mask, const SpatialTransformParams& params) {
  if (!(params.scale > 0.0)) throw std::invalid_argument("transform scale must be > 0");
  const Dims3& d = mask.dims;
  BinaryMask out = BinaryMask::zeros(d, mask.spacing);

  constexpr double kDegToRad = 0.017453292519943295;
  double az = params.rotation_deg[0] * kDegToRad;  // about z: rotates (x, y)
  double ay = params.rotation_deg[1] * kDegToRad;  // about y: rotates (z, x)
  double ax = params.rotation_deg[2] * kDegToRad;  // about x: rotates (y, z)

  // Forward rotation R = Rz * Ry * Rx on column vectors (x, y, z).
  double cz = std::cos(az), sz = std::sin(az);
  double cy = std::cos(ay), sy = std::sin(ay);
  double cx = std::cos(ax), sx = std::sin(ax);
  double r[3][3] = {
      {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx},
      {sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx},
      {-sy, cy * sx, cy * cx},
  };

  double center[3] = {(d[2] - 1) / 2.0, (d[1] - 1) / 2.0, (d[0] - 1) / 2.0};  // (x, y, z)
  double inv_scale = 1.0 / params.scale;

  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x) {
        // Inverse map: p_src = R^T * (p_dst - c - t) / s + c.
        double px = x - center[0] - params.translation[2];
        double py = y - center[1] - params.translation[1];
        double pz = z - center[2] - params.translation[0];
        double qx = (r[0][0] * px + r[1][0] * py + r[2][0] * pz) * inv_scale + center[0];
        double qy = (r[0][1] * px + r[1][1] * py + r[2][1] * pz) * inv_scale + center[1];
        double qz = (r[0][2] * px + r[1][2] * py + r[2][2] * pz) * inv_scale + center[2];
        int ix = static_cast<int>(std::llround(qx));
        int iy = static_cast<int>(std::llround(qy));
        int iz = static_cast<int>(std::llround(qz));
        if (ix < 0 || ix >= d[2] || iy < 0 || iy >= d[1] || iz < 0 || iz >= d[0]) continue;
        out.at(z, y, x) = mask.at(iz, iy, ix);
      }
    }
  }
  return out;
}

BoundingBox3 labeled_bounding_box(const TriLabelMask& mask) {
  BoundingBox3 box{{mask.dims[0], mask.dims[1], mask.dims[2]}, {-1, -1, -1}};
  for (int z = 0; z < mask.dims[0]; ++z) {
    for (int y = 0; y < mask.dims[1]; ++y) {
      for (int x = 0; x < mask.dims[2]; ++x) {
        if (mask.at(z, y, x) == kUnlabeled) continue;
        box.lo = {std::min(box.lo[0], z), std::min(box.lo[1], y), std::min(box.lo[2], x)};
        box.hi = {std::max(box.hi[0], z), std::max(box.hi[1], y), std::max(box.hi[2], x)};
      }
    }
  }
  return box;
}

BoundingBox3 foreground_bounding_box(const BinaryMask& mask) {
  BoundingBox3 box{{mask.dims[0], mask.dims[1], mask.dims[2]}, {-1, -1, -1}};
  for (int z = 0; z < mask.dims[0]; ++z) {
    for (int y = 0; y < mask.dims[1]; ++y) {
      for (int x = 0; x < mask.dims[2]; ++x) {
        if (!mask.at(z, y, x)) continue;
        box.lo = {std::min(box.lo[0], z), std::min(box.lo[1], y), std::min(box.lo[2], x)};
        box.hi = {std::max(box.hi[0], z), std::max(box.hi[1], y), std::max(box.hi[2], x)};
      }
    }
  }
  return box;
}

BoundingBox3 scale_box(const BoundingBox3& box, double scale) {
  if (!box.valid()) throw std::invalid_argument("cannot scale an empty box");
  BoundingBox3 out;
  for (int a = 0; a < 3; ++a) {
    int extent = box.hi[a] - box.lo[a] + 1;
    int scaled = std::max<int>(1, static_cast<int>(std::llround(scale * extent)));
    int pad = scaled - extent;
    int pad_lo = pad >= 0 ? (pad + 1) / 2 : pad / 2;  // odd padding goes low
    out.lo[a] = box.lo[a] - pad_lo;
    out.hi[a] = out.lo[a] + scaled - 1;
  }
  return out;
}

PriorCropResult prior_crop_dataset(const std::vector<std::pair<VolumeImage, TriLabelMask>>& cases,
                                   double scale, const Dims3& round_up_multiple) {
  if (cases.empty()) throw std::invalid_argument("prior crop needs at least one case");
  for (int a = 0; a < 3; ++a) {
    if (round_up_multiple[a] < 1) throw std::invalid_argument("round_up_multiple must be >= 1");
  }

  PriorCropResult result;
  result.common_dims = {0, 0, 0};
  for (const auto& [image, label] : cases) {
    image.validate();
    label.validate();
    if (image.dims != label.dims) {
      throw std::invalid_argument("prior crop: image and label dims differ");
    }
    for (int a = 0; a < 3; ++a) {
      result.common_dims[a] = std::max(result.common_dims[a], image.dims[a]);
    }
  }

  // Union box of labeled voxels in the center-aligned common frame.
  BoundingBox3 united{{result.common_dims[0], result.common_dims[1], result.common_dims[2]},
                      {-1, -1, -1}};
  result.case_offsets.reserve(cases.size());
  for (const auto& [image, label] : cases) {
    std::array<int, 3> off;
    for (int a = 0; a < 3; ++a) off[a] = (result.common_dims[a] - image.dims[a]) / 2;
    result.case_offsets.push_back(off);
    BoundingBox3 b = labeled_bounding_box(label);
    if (!b.valid()) throw std::invalid_argument("prior crop: case has no labeled voxel");
    for (int a = 0; a < 3; ++a) {
      united.lo[a] = std::min(united.lo[a], b.lo[a] + off[a]);
      united.hi[a] = std::max(united.hi[a], b.hi[a] + off[a]);
    }
  }

  BoundingBox3 box = scale_box(united, scale);
  for (int a = 0; a < 3; ++a) {
    int extent = box.hi[a] - box.lo[a] + 1;
    int rem = extent % round_up_multiple[a];
    if (rem != 0) {
      int grow = round_up_multiple[a] - rem;
      box.lo[a] -= (grow + 1) / 2;
      box.hi[a] += grow / 2;
    }
  }
  result.box = box;

  for (std::size_t i = 0; i < cases.size(); ++i) {
    // Cropping directly in each case's own frame avoids materializing the
    // padded common volume.
    BoundingBox3 local = box;
    for (int a = 0; a < 3; ++a) {
      local.lo[a] -= result.case_offsets[i][a];
      local.hi[a] -= result.case_offsets[i][a];
    }
    // Padded label voxels are background: they lie outside every loose box
    // and beyond the annotated slice range.
    result.cases.emplace_back(crop_to_box(cases[i].first, local, 0.0f),
                              crop_to_box(cases[i].second, local, uint8_t{0}));
  }
  return result;
}

}  // namespace vseg
