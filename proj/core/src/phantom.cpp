#include "vseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vseg/rng.hpp"

namespace vseg {

namespace {

constexpr int kMargin = 2;  // gt keeps this distance to the volume boundary

struct Vec3 {
  double z = 0, y = 0, x = 0;
};

void rasterize_ellipsoid(BinaryMask& m, const Vec3& c, const Vec3& r) {
  const Dims3& d = m.dims;
  int z0 = std::max(0, static_cast<int>(std::floor(c.z - r.z)));
  int z1 = std::min(d[0] - 1, static_cast<int>(std::ceil(c.z + r.z)));
  for (int z = z0; z <= z1; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x) {
        double dz = (z - c.z) / r.z, dy = (y - c.y) / r.y, dx = (x - c.x) / r.x;
        if (dz * dz + dy * dy + dx * dx <= 1.0) m.at(z, y, x) = 1;
      }
    }
  }
}

void rasterize_disk(BinaryMask& m, int z, double cy, double cx, double r) {
  const Dims3& d = m.dims;
  for (int y = 0; y < d[1]; ++y) {
    for (int x = 0; x < d[2]; ++x) {
      double dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx <= r * r) m.at(z, y, x) = 1;
    }
  }
}

void rasterize_ball(BinaryMask& m, const Vec3& c, double r) {
  rasterize_ellipsoid(m, c, {r, r, r});
}

bool within_margin(const BinaryMask& gt) {
  BoundingBox3 b = foreground_bounding_box(gt);
  if (!b.valid()) return false;
  for (int a = 0; a < 3; ++a) {
    if (b.lo[a] < kMargin || b.hi[a] > gt.dims[a] - 1 - kMargin) return false;
  }
  return true;
}

int inplane_component_count(const BinaryMask& m, int z) {
  BinaryMask slice = BinaryMask::zeros({1, m.dims[1], m.dims[2]});
  std::copy_n(m.data.begin() + m.index(z, 0, 0), slice.data.size(), slice.data.begin());
  return connected_components(slice, 6).count;
}

BinaryMask draw_ellipsoid(const PhantomSpec& spec, Rng& rng, double shrink) {
  const Dims3& d = spec.dims;
  BinaryMask gt = BinaryMask::zeros(d, spec.spacing);
  Vec3 r, c;
  double* rr[3] = {&r.z, &r.y, &r.x};
  double* cc[3] = {&c.z, &c.y, &c.x};
  for (int a = 0; a < 3; ++a) {
    double frac = rng.uniform(spec.size_min, spec.size_max) * shrink;
    double radius = std::min(frac * d[a] / 2.0, (d[a] - 1 - 2.0 * kMargin) / 2.0);
    radius = std::max(radius, 2.0);
    double mid = (d[a] - 1) / 2.0;
    double center = mid + rng.uniform(-1.0, 1.0) * 0.05 * d[a];
    center = std::clamp(center, kMargin + radius, d[a] - 1.0 - kMargin - radius);
    *rr[a] = radius;
    *cc[a] = center;
  }
  rasterize_ellipsoid(gt, c, r);
  return gt;
}

BinaryMask draw_lobed_ellipsoid(const PhantomSpec& spec, Rng& rng) {
  BinaryMask gt = draw_ellipsoid(spec, rng, 0.8);
  BoundingBox3 main_box = foreground_bounding_box(gt);
  Vec3 c{(main_box.lo[0] + main_box.hi[0]) / 2.0, (main_box.lo[1] + main_box.hi[1]) / 2.0,
         (main_box.lo[2] + main_box.hi[2]) / 2.0};
  Vec3 r{(main_box.hi[0] - main_box.lo[0]) / 2.0 + 0.5,
         (main_box.hi[1] - main_box.lo[1]) / 2.0 + 0.5,
         (main_box.hi[2] - main_box.lo[2]) / 2.0 + 0.5};
  int n_lobes = static_cast<int>(rng.uniform_int(2, 3));
  double min_r = std::min({r.z, r.y, r.x});
  for (int i = 0; i < n_lobes; ++i) {
    double theta = rng.uniform(0.0, 6.283185307179586);
    double phi = rng.uniform(-0.5, 0.5);
    Vec3 dir{std::sin(phi), std::cos(phi) * std::sin(theta), std::cos(phi) * std::cos(theta)};
    double t = 1.0 / std::sqrt(dir.z * dir.z / (r.z * r.z) + dir.y * dir.y / (r.y * r.y) +
                               dir.x * dir.x / (r.x * r.x));
    double lobe_r = std::max(1.5, rng.uniform(0.35, 0.5) * min_r);
    // Center sits just inside the main surface so the union stays connected.
    Vec3 lc{c.z + 0.9 * t * dir.z, c.y + 0.9 * t * dir.y, c.x + 0.9 * t * dir.x};
    lc.z = std::clamp(lc.z, kMargin + lobe_r, spec.dims[0] - 1.0 - kMargin - lobe_r);
    lc.y = std::clamp(lc.y, kMargin + lobe_r, spec.dims[1] - 1.0 - kMargin - lobe_r);
    lc.x = std::clamp(lc.x, kMargin + lobe_r, spec.dims[2] - 1.0 - kMargin - lobe_r);
    rasterize_ball(gt, lc, lobe_r);
  }
  return gt;
}

BinaryMask draw_tube(const PhantomSpec& spec, Rng& rng) {
  const Dims3& d = spec.dims;
  BinaryMask gt = BinaryMask::zeros(d, spec.spacing);
  int z0 = kMargin + static_cast<int>(rng.uniform_int(0, 2));
  int z1 = d[0] - 1 - kMargin - static_cast<int>(rng.uniform_int(0, 2));
  double len = std::max(1, z1 - z0);
  double r = std::max(2.0, rng.uniform(spec.size_min, spec.size_max) * std::min(d[1], d[2]) / 4.0);
  double cy0 = (d[1] - 1) / 2.0 + rng.uniform(-1.0, 1.0);
  double cx0 = (d[2] - 1) / 2.0 + rng.uniform(-1.0, 1.0);
  double amp_y = rng.uniform(0.0, 0.08) * d[1];
  double amp_x = rng.uniform(0.0, 0.08) * d[2];
  double phase_y = rng.uniform(0.0, 6.283185307179586);
  double phase_x = rng.uniform(0.0, 6.283185307179586);
  for (int z = z0; z <= z1; ++z) {
    double s = (z - z0) / len;
    double cy = cy0 + amp_y * std::sin(6.283185307179586 * 0.7 * s + phase_y);
    double cx = cx0 + amp_x * std::sin(6.283185307179586 * 0.7 * s + phase_x);
    cy = std::clamp(cy, kMargin + r + 0.5, d[1] - 1.0 - kMargin - r - 0.5);
    cx = std::clamp(cx, kMargin + r + 0.5, d[2] - 1.0 - kMargin - r - 0.5);
    rasterize_disk(gt, z, cy, cx, r);
  }
  return gt;
}

BinaryMask draw_bifurcated_tube(const PhantomSpec& spec, Rng& rng) {
  const Dims3& d = spec.dims;
  BinaryMask gt = BinaryMask::zeros(d, spec.spacing);
  int z0 = kMargin + static_cast<int>(rng.uniform_int(0, 1));
  int z1 = d[0] - 1 - kMargin - static_cast<int>(rng.uniform_int(0, 1));
  int z_split = z0 + static_cast<int>((z1 - z0) * rng.uniform(0.42, 0.55));
  double r_t = std::max(2.2, rng.uniform(0.11, 0.15) * std::min(d[1], d[2]));
  double r_b = std::max(1.6, 0.65 * r_t);
  double cy = (d[1] - 1) / 2.0 + rng.uniform(-1.0, 1.0);
  double cx = (d[2] - 1) / 2.0 + rng.uniform(-0.5, 0.5);
  double d0 = 0.35 * r_t;
  double d1 = r_b + rng.uniform(2.0, 3.5);
  d1 = std::min(d1, std::min(cx, d[2] - 1 - cx) - kMargin - r_b - 0.5);
  d1 = std::max(d1, r_b + 1.5);  // branches must fully separate in-plane

  for (int z = z0; z <= z_split; ++z) {
    rasterize_disk(gt, z, cy, cx, r_t);
  }
  for (int z = z_split + 1; z <= z1; ++z) {
    double s = static_cast<double>(z - z_split) / std::max(1, z1 - z_split);
    double off = d0 + (d1 - d0) * s;
    rasterize_disk(gt, z, cy, cx - off, r_b);
    rasterize_disk(gt, z, cy, cx + off, r_b);
  }
  return gt;
}

bool bifurcation_present(const BinaryMask& gt) {
  for (int z = gt.dims[0] / 2; z < gt.dims[0]; ++z) {
    if (inplane_component_count(gt, z) >= 2) return true;
  }
  return false;
}

// Distractor blob near (but disjoint from) the gt surface, or empty on failure.
BinaryMask draw_distractor(const BinaryMask& gt, Rng& rng) {
  const Dims3& d = gt.dims;
  int gap = static_cast<int>(rng.uniform_int(1, 3));
  BinaryMask forbidden = gap > 1 ? morph(gt, MorphOp::kDilate, gap - 1, 6) : gt;
  BinaryMask boundary = gt;
  BinaryMask eroded = morph(gt, MorphOp::kErode, 1, 6);
  std::vector<std::size_t> boundary_idx;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (gt.data[i] && !eroded.data[i]) boundary_idx.push_back(i);
  }
  if (boundary_idx.empty()) return BinaryMask::zeros(d, gt.spacing);

  Vec3 centroid{0, 0, 0};
  std::size_t n = 0;
  for (int z = 0; z < d[0]; ++z) {
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[2]; ++x) {
        if (!gt.at(z, y, x)) continue;
        centroid.z += z;
        centroid.y += y;
        centroid.x += x;
        ++n;
      }
    }
  }
  centroid.z /= n;
  centroid.y /= n;
  centroid.x /= n;

  for (int attempt = 0; attempt < 8; ++attempt) {
    std::size_t bi = boundary_idx[rng.uniform_int(0, static_cast<int64_t>(boundary_idx.size()) - 1)];
    int bz = static_cast<int>(bi / (static_cast<std::size_t>(d[1]) * d[2]));
    int by = static_cast<int>((bi / d[2]) % d[1]);
    int bx = static_cast<int>(bi % d[2]);
    Vec3 dir{bz - centroid.z, by - centroid.y, bx - centroid.x};
    double norm = std::sqrt(dir.z * dir.z + dir.y * dir.y + dir.x * dir.x);
    if (norm < 1e-9) dir = {0, 0, 1}, norm = 1;
    dir = {dir.z / norm, dir.y / norm, dir.x / norm};
    double r_blob = rng.uniform(1.8, 3.2);
    double reach = gap + r_blob;
    Vec3 c{bz + dir.z * reach, by + dir.y * reach, bx + dir.x * reach};
    c.z = std::clamp(c.z, 1.0 + r_blob, d[0] - 2.0 - r_blob);
    c.y = std::clamp(c.y, 1.0 + r_blob, d[1] - 2.0 - r_blob);
    c.x = std::clamp(c.x, 1.0 + r_blob, d[2] - 2.0 - r_blob);
    BinaryMask blob = BinaryMask::zeros(d, gt.spacing);
    rasterize_ball(blob, c, r_blob);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < blob.data.size(); ++i) {
      if (blob.data[i] && forbidden.data[i]) blob.data[i] = 0;
      kept += blob.data[i];
    }
    if (kept >= 4) return blob;
  }
  return BinaryMask::zeros(d, gt.spacing);
}

}  // namespace

void PhantomSpec::validate() const {
  if (!(size_min > 0.0) || size_max > 1.0 || size_min > size_max) {
    throw std::invalid_argument("phantom size_range must satisfy 0 < min <= max <= 1");
  }
  if (noise_sigma < 0.0f) throw std::invalid_argument("phantom noise_sigma must be >= 0");
  if (!neighbor && std::abs(fg_mean - bg_mean) < 2.0f * noise_sigma) {
    throw std::invalid_argument("phantom fg/bg means must differ by at least 2*noise_sigma");
  }
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 16) throw std::invalid_argument("phantom dims must be >= 16 per axis");
  }
}

PhantomCase generate_case(const PhantomSpec& spec, uint64_t seed, int case_id) {
  spec.validate();

  for (int attempt = 0; attempt < 32; ++attempt) {
    Rng rng(mix_seed(seed, 0xCA5E0000ull + attempt));

    BinaryMask gt;
    switch (spec.family) {
      case PhantomFamily::kEllipsoid:
        gt = draw_ellipsoid(spec, rng, 1.0);
        break;
      case PhantomFamily::kLobedEllipsoid:
        gt = draw_lobed_ellipsoid(spec, rng);
        break;
      case PhantomFamily::kTube:
        gt = draw_tube(spec, rng);
        break;
      case PhantomFamily::kBifurcatedTube:
        gt = draw_bifurcated_tube(spec, rng);
        break;
    }

    if (gt.empty_foreground() || !within_margin(gt)) continue;
    if (connected_components(gt, 6).count != 1) continue;
    if (spec.family == PhantomFamily::kBifurcatedTube && !bifurcation_present(gt)) continue;

    BinaryMask distractor = BinaryMask::zeros(spec.dims, spec.spacing);
    if (spec.neighbor) {
      distractor = draw_distractor(gt, rng);
      if (distractor.empty_foreground()) continue;
    }

    float case_fg = spec.fg_mean + static_cast<float>(rng.uniform(-spec.fg_jitter, spec.fg_jitter));
    float case_bg = spec.bg_mean + static_cast<float>(rng.uniform(-spec.bg_jitter, spec.bg_jitter));

    PhantomCase out;
    out.case_id = case_id;
    out.seed = seed;
    out.gt = gt;
    out.image = VolumeImage::zeros(spec.dims, spec.spacing);
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
      out.image.data[i] = (gt.data[i] || distractor.data[i]) ? case_fg : case_bg;
    }
    if (spec.noise_sigma > 0.0f) {
      for (float& v : out.image.data) {
        v += spec.noise_sigma * static_cast<float>(rng.gaussian());
      }
    }
    return out;
  }
  throw std::logic_error("phantom generation failed to satisfy constraints after 32 attempts");
}

PhantomDataset generate_dataset(const PhantomSpec& spec, int n_train, int n_val, int n_test,
                                uint64_t seed) {
  if (n_train < 1 || n_val < 1) {
    throw std::invalid_argument("dataset needs at least one train and one val case");
  }
  if (n_test < 0) throw std::invalid_argument("n_test must be >= 0");

  constexpr uint64_t kValOffset = 1ull << 32;
  constexpr uint64_t kTestOffset = 1ull << 33;

  PhantomDataset ds;
  int case_id = 0;
  for (int i = 0; i < n_train; ++i) {
    ds.train.push_back(generate_case(spec, seed + 0 + i, case_id++));
  }
  for (int i = 0; i < n_val; ++i) {
    ds.val.push_back(generate_case(spec, seed + kValOffset + i, case_id++));
  }
  for (int i = 0; i < n_test; ++i) {
    ds.test.push_back(generate_case(spec, seed + kTestOffset + i, case_id++));
  }
  return ds;
}

}  // namespace vseg
