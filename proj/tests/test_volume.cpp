#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

using namespace vseg;

namespace {

BinaryMask cube_mask(const Dims3& dims, int lo, int hi) {
  BinaryMask m = BinaryMask::zeros(dims);
  for (int z = lo; z <= hi; ++z)
    for (int y = lo; y <= hi; ++y)
      for (int x = lo; x <= hi; ++x) m.at(z, y, x) = 1;
  return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i] && !b.data[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("resample identity spacing is the identity for both modes") {
  VolumeImage img = VolumeImage::zeros({4, 5, 6}, {1.5, 2.0, 0.5});
  Rng rng(1);
  for (auto& v : img.data) v = static_cast<float>(rng.gaussian());

  VolumeImage tri = resample(img, img.spacing, Interp::kTrilinear);
  VolumeImage near = resample(img, img.spacing, Interp::kNearest);
  CHECK(tri.dims == img.dims);
  CHECK(tri.data == img.data);
  CHECK(near.data == img.data);

  BinaryMask m = oracle::random_mask({4, 5, 6}, 0.4, 7);
  m.spacing = img.spacing;
  CHECK(resample(m, img.spacing).data == m.data);
}

TEST_CASE("resample of a constant image stays constant at any spacing") {
  VolumeImage img = VolumeImage::zeros({6, 6, 6}, {1, 1, 1});
  std::fill(img.data.begin(), img.data.end(), 3.25f);
  for (Spacing3 target : {Spacing3{2, 2, 2}, Spacing3{0.5, 1.0, 0.7}, Spacing3{1.3, 0.4, 2.2}}) {
    VolumeImage out = resample(img, target, Interp::kTrilinear);
    for (float v : out.data) CHECK(v == doctest::Approx(3.25f).epsilon(1e-6));
  }
}

TEST_CASE("nearest resample matches the voxel-center lookup oracle") {
  // 4^3 mask holding a 2^3 cube, spacing halved along x.
  BinaryMask m = cube_mask({4, 4, 4}, 1, 2);
  Spacing3 target{1.0, 1.0, 0.5};
  BinaryMask out = resample(m, target);
  CHECK(out.dims == Dims3{4, 4, 8});

  // Independent oracle: the output voxel center in physical coordinates,
  // mapped into input index space and rounded.
  for (int z = 0; z < out.dims[0]; ++z) {
    for (int y = 0; y < out.dims[1]; ++y) {
      for (int x = 0; x < out.dims[2]; ++x) {
        auto src = [](int i, double t, double s) {
          double physical = (i + 0.5) * t;
          return static_cast<int>(std::llround(physical / s - 0.5));
        };
        int sz = std::clamp(src(z, target[0], m.spacing[0]), 0, m.dims[0] - 1);
        int sy = std::clamp(src(y, target[1], m.spacing[1]), 0, m.dims[1] - 1);
        int sx = std::clamp(src(x, target[2], m.spacing[2]), 0, m.dims[2] - 1);
        CHECK(out.at(z, y, x) == m.at(sz, sy, sx));
      }
    }
  }
}

TEST_CASE("resample rejects non-positive spacing") {
  VolumeImage img = VolumeImage::zeros({4, 4, 4});
  CHECK_THROWS_AS(resample(img, {0.0, 1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(resample(img, {1.0, -2.0, 1.0}), std::invalid_argument);
}

TEST_CASE("crop_to_box identity and pure padding") {
  VolumeImage img = VolumeImage::zeros({3, 4, 5});
  Rng rng(2);
  for (auto& v : img.data) v = static_cast<float>(rng.next_double());

  VolumeImage same = crop_to_box(img, BoundingBox3::full(img.dims), -1.0f);
  CHECK(same.data == img.data);

  BoundingBox3 outside{{10, 10, 10}, {12, 12, 12}};
  VolumeImage fill = crop_to_box(img, outside, 9.5f);
  for (float v : fill.data) CHECK(v == 9.5f);
}

TEST_CASE("crop_to_box matches direct indexing") {
  VolumeImage img = VolumeImage::zeros({8, 8, 8});
  Rng rng(3);
  for (auto& v : img.data) v = static_cast<float>(rng.next_double());
  BoundingBox3 box{{2, 2, 2}, {5, 5, 5}};
  VolumeImage out = crop_to_box(img, box, 0.0f);
  CHECK(out.dims == Dims3{4, 4, 4});
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(out.at(z, y, x) == img.at(z + 2, y + 2, x + 2));
}

TEST_CASE("crop then inverse crop restores the in-bounds region") {
  BinaryMask m = oracle::random_mask({6, 7, 8}, 0.35, 11);
  BoundingBox3 box{{-2, 3, 1}, {4, 9, 12}};  // sticks out on purpose
  BinaryMask cropped = crop_to_box(m, box, uint8_t{0});
  BinaryMask restored = crop_to_box(cropped, box.inverse(m.dims), uint8_t{0});
  CHECK(restored.dims == m.dims);
  for (int z = 0; z < m.dims[0]; ++z) {
    for (int y = 0; y < m.dims[1]; ++y) {
      for (int x = 0; x < m.dims[2]; ++x) {
        bool in_box = z >= box.lo[0] && z <= box.hi[0] && y >= box.lo[1] && y <= box.hi[1] &&
                      x >= box.lo[2] && x <= box.hi[2];
        if (in_box) {
          CHECK(restored.at(z, y, x) == m.at(z, y, x));
        } else {
          CHECK(restored.at(z, y, x) == 0);
        }
      }
    }
  }
}

TEST_CASE("morphology of the empty mask is empty") {
  BinaryMask empty = BinaryMask::zeros({5, 5, 5});
  for (MorphOp op : {MorphOp::kDilate, MorphOp::kErode, MorphOp::kClose}) {
    CHECK(morph(empty, op, 2, 6).foreground_count() == 0);
  }
}

TEST_CASE("closing fills a unit hole in a solid cube") {
  BinaryMask m = cube_mask({7, 7, 7}, 2, 4);
  m.at(3, 3, 3) = 0;
  BinaryMask closed = morph(m, MorphOp::kClose, 1, 6);
  CHECK(closed.at(3, 3, 3) == 1);
  BinaryMask solid = cube_mask({7, 7, 7}, 2, 4);
  CHECK(closed.data == solid.data);
}

TEST_CASE("dilation matches the brute-force neighbor union oracle") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    BinaryMask m = oracle::random_mask({6, 6, 6}, 0.2, seed);
    for (int conn : {6, 26}) {
      CHECK(morph(m, MorphOp::kDilate, 2, conn).data == oracle::brute_dilate(m, 2, conn).data);
      CHECK(morph(m, MorphOp::kErode, 1, conn).data == oracle::brute_erode(m, 1, conn).data);
    }
    CHECK(morph(m, MorphOp::kDilate, 1, 6, true).data ==
          oracle::brute_dilate(m, 1, 6, true).data);
  }
}

TEST_CASE("morph rejects zero iterations") {
  BinaryMask m = BinaryMask::zeros({4, 4, 4});
  CHECK_THROWS_AS(morph(m, MorphOp::kDilate, 0, 6), std::invalid_argument);
}

TEST_CASE("morphology ordering properties") {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    BinaryMask m = oracle::random_mask({6, 6, 6}, 0.3, 100 + seed);
    for (int k : {1, 2}) {
      BinaryMask dil = morph(m, MorphOp::kDilate, k, 6);
      BinaryMask ero = morph(m, MorphOp::kErode, k, 6);
      BinaryMask clo = morph(m, MorphOp::kClose, k, 6);
      CHECK(subset(m, dil));
      CHECK(subset(ero, m));
      CHECK(subset(m, clo));
    }
    // Order preservation: m subset m' implies op(m) subset op(m').
    BinaryMask m2 = m;
    Rng rng(200 + seed);
    for (auto& v : m2.data) v |= rng.bernoulli(0.1) ? 1 : 0;
    for (MorphOp op : {MorphOp::kDilate, MorphOp::kErode, MorphOp::kClose}) {
      CHECK(subset(morph(m, op, 1, 6), morph(m2, op, 1, 6)));
    }
  }
}

TEST_CASE("connected components: trivial cases") {
  BinaryMask empty = BinaryMask::zeros({4, 4, 4});
  CHECK(connected_components(empty, 6).count == 0);

  BinaryMask two = BinaryMask::zeros({4, 4, 4});
  two.at(0, 0, 0) = 1;
  two.at(3, 3, 3) = 1;
  ComponentLabels labels = connected_components(two, 26);
  CHECK(labels.count == 2);
  CHECK(labels.at(0, 0, 0) == 1);  // scan order assigns the first label
  CHECK(labels.at(3, 3, 3) == 2);
}

TEST_CASE("connected components partition equals flood fill oracle") {
  for (uint64_t seed = 0; seed < 6; ++seed) {
    BinaryMask m = oracle::random_mask({5, 5, 5}, 0.35, 300 + seed);
    for (int conn : {6, 26}) {
      ComponentLabels got = connected_components(m, conn);
      int want_count = 0;
      std::vector<int> want = oracle::flood_fill_components(m, conn, want_count);
      CHECK(got.count == want_count);
      // Same partition: two voxels share a label iff the oracle agrees.
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        for (std::size_t j = i + 1; j < m.data.size(); ++j) {
          if (!m.data[i] || !m.data[j]) continue;
          CHECK((got.labels[i] == got.labels[j]) == (want[i] == want[j]));
        }
      }
    }
  }
}

TEST_CASE("spatial transform identity and pure translation") {
  BinaryMask m = oracle::random_mask({8, 8, 8}, 0.3, 17);
  CHECK(spatial_transform(m, {}).data == m.data);

  BinaryMask single = BinaryMask::zeros({8, 8, 8});
  single.at(3, 3, 3) = 1;
  SpatialTransformParams shift;
  shift.translation = {2, 0, 0};  // +2 along z
  BinaryMask moved = spatial_transform(single, shift);
  CHECK(moved.foreground_count() == 1);
  CHECK(moved.at(5, 3, 3) == 1);
}

TEST_CASE("spatial transform rejects non-positive scale") {
  BinaryMask m = BinaryMask::zeros({4, 4, 4});
  SpatialTransformParams params;
  params.scale = 0.0;
  CHECK_THROWS_AS(spatial_transform(m, params), std::invalid_argument);
}

TEST_CASE("90 degree z-rotation matches inverse-map oracle") {
  BinaryMask bar = BinaryMask::zeros({9, 9, 9});
  for (int x = 1; x <= 7; ++x) {
    bar.at(4, 4, x) = 1;
    bar.at(5, 4, x) = 1;
  }
  SpatialTransformParams params;
  params.rotation_deg = {90.0, 0.0, 0.0};  // about z
  BinaryMask got = spatial_transform(bar, params);

  // Oracle: rotate each destination voxel by -90 degrees about the center in
  // the (x, y) plane and look up the source voxel.
  double c = (9 - 1) / 2.0;
  for (int z = 0; z < 9; ++z) {
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 9; ++x) {
        double dx = x - c, dy = y - c;
        // (x, y) rotated by -90: (x', y') = (y, -x)
        int sx = static_cast<int>(std::llround(dy + c));
        int sy = static_cast<int>(std::llround(-dx + c));
        uint8_t want = 0;
        if (sx >= 0 && sx < 9 && sy >= 0 && sy < 9) want = bar.at(z, sy, sx);
        CHECK(got.at(z, y, x) == want);
      }
    }
  }
}

TEST_CASE("translate there and back is the identity away from the border") {
  BinaryMask m = BinaryMask::zeros({10, 10, 10});
  for (int z = 4; z <= 6; ++z)
    for (int y = 4; y <= 6; ++y)
      for (int x = 4; x <= 6; ++x) m.at(z, y, x) = 1;
  SpatialTransformParams fwd, bwd;
  fwd.translation = {2, -1, 3};
  bwd.translation = {-2, 1, -3};
  BinaryMask round_trip = spatial_transform(spatial_transform(m, fwd), bwd);
  CHECK(round_trip.data == m.data);
}

TEST_CASE("prior crop: labels spanning the whole volume") {
  VolumeImage img = VolumeImage::zeros({20, 20, 20});
  TriLabelMask label = TriLabelMask::unlabeled(img.dims);
  std::fill(label.data.begin(), label.data.end(), uint8_t{0});
  label.at(10, 10, 10) = 1;

  PriorCropResult result = prior_crop_dataset({{img, label}}, 1.2);
  CHECK(result.cases.size() == 1);
  Dims3 d = result.cases[0].first.dims;
  CHECK(d == Dims3{24, 24, 24});  // round(1.2 * 20)
  CHECK(result.box.lo == std::array<int, 3>{-2, -2, -2});
  CHECK(result.box.hi == std::array<int, 3>{21, 21, 21});
}

TEST_CASE("prior crop: union box over disjoint label cubes matches brute force") {
  Dims3 dims{16, 16, 16};
  VolumeImage img_a = VolumeImage::zeros(dims), img_b = VolumeImage::zeros(dims);
  TriLabelMask lab_a = TriLabelMask::unlabeled(dims), lab_b = TriLabelMask::unlabeled(dims);
  for (int z = 2; z <= 4; ++z)
    for (int y = 2; y <= 4; ++y)
      for (int x = 2; x <= 4; ++x) lab_a.at(z, y, x) = 1;
  for (int z = 9; z <= 12; ++z)
    for (int y = 8; y <= 10; ++y)
      for (int x = 11; x <= 13; ++x) lab_b.at(z, y, x) = 0;

  // Brute-force union of non-unlabeled voxels over both cases.
  int lo[3] = {99, 99, 99}, hi[3] = {-1, -1, -1};
  for (const TriLabelMask* lab : {&lab_a, &lab_b}) {
    for (int z = 0; z < dims[0]; ++z)
      for (int y = 0; y < dims[1]; ++y)
        for (int x = 0; x < dims[2]; ++x) {
          if (lab->at(z, y, x) == kUnlabeled) continue;
          lo[0] = std::min(lo[0], z);
          lo[1] = std::min(lo[1], y);
          lo[2] = std::min(lo[2], x);
          hi[0] = std::max(hi[0], z);
          hi[1] = std::max(hi[1], y);
          hi[2] = std::max(hi[2], x);
        }
  }

  PriorCropResult result = prior_crop_dataset({{img_a, lab_a}, {img_b, lab_b}}, 1.2);
  CHECK(result.cases[0].first.dims == result.cases[1].first.dims);
  for (int a = 0; a < 3; ++a) {
    int extent = hi[a] - lo[a] + 1;
    int want = std::max<int>(1, static_cast<int>(std::llround(1.2 * extent)));
    CHECK(result.box.hi[a] - result.box.lo[a] + 1 == want);
    CHECK(result.box.lo[a] <= lo[a]);
    CHECK(result.box.hi[a] >= hi[a]);
  }
}

TEST_CASE("prior crop: labels confined to one slice keep z extent 1") {
  VolumeImage img = VolumeImage::zeros({16, 16, 16});
  TriLabelMask label = TriLabelMask::unlabeled(img.dims);
  for (int y = 4; y <= 10; ++y)
    for (int x = 4; x <= 10; ++x) label.at(8, y, x) = 1;
  PriorCropResult result = prior_crop_dataset({{img, label}}, 1.2);
  CHECK(result.cases[0].first.dims[0] == 1);
}

TEST_CASE("prior crop rejects empty or all-unlabeled input") {
  CHECK_THROWS_AS(prior_crop_dataset({}), std::invalid_argument);
  VolumeImage img = VolumeImage::zeros({16, 16, 16});
  TriLabelMask label = TriLabelMask::unlabeled(img.dims);
  std::vector<std::pair<VolumeImage, TriLabelMask>> cases;
  cases.emplace_back(img, label);
  CHECK_THROWS_AS(prior_crop_dataset(cases), std::invalid_argument);
}

TEST_CASE("type invariants are validated") {
  VolumeImage img = VolumeImage::zeros({2, 2, 2});
  img.data.pop_back();
  CHECK_THROWS_AS(img.validate(), std::invalid_argument);

  BinaryMask m = BinaryMask::zeros({2, 2, 2});
  m.data[0] = 2;
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);

  TriLabelMask t = TriLabelMask::unlabeled({2, 2, 2});
  t.data[0] = 7;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);

  BinaryMask bad_spacing = BinaryMask::zeros({2, 2, 2});
  bad_spacing.spacing = {0.0, 1.0, 1.0};
  CHECK_THROWS_AS(bad_spacing.validate(), std::invalid_argument);
}
