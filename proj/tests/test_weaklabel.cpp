#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "vseg/phantom.hpp"
#include "vseg/rng.hpp"
#include "vseg/weaklabel.hpp"

using namespace vseg;

namespace {

BinaryMask stacked_disk_mask(Dims3 dims, int z0, int z1, double cy, double cx, double r) {
  BinaryMask m = BinaryMask::zeros(dims);
  for (int z = z0; z <= z1; ++z) {
    for (int y = 0; y < dims[1]; ++y) {
      for (int x = 0; x < dims[2]; ++x) {
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(z, y, x) = 1;
      }
    }
  }
  return m;
}

Mask2D disk_slice(int h, int w, double cy, double cx, double r2) {
  Mask2D m = Mask2D::zeros(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r2) m.at(y, x) = 1;
    }
  }
  return m;
}

Mask2D bar_slice(int h, int w, int y0, int y1, int x0, int x1) {
  Mask2D m = Mask2D::zeros(h, w);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.at(y, x) = 1;
  return m;
}

// Independent re-derivation of the six candidate reaches through a component's
// mass center (the production code is not consulted).
struct CandidateReach {
  int pos, neg;
};
std::array<CandidateReach, 6> brute_candidates(const Mask2D& comp, double cy, double cx) {
  std::array<CandidateReach, 6> out{};
  for (int k = 0; k < 6; ++k) {
    double theta = k * 30.0 * 3.14159265358979323846 / 180.0;
    double dy = std::sin(theta), dx = std::cos(theta);
    auto inside = [&](double t) {
      int y = static_cast<int>(std::llround(cy + t * dy));
      int x = static_cast<int>(std::llround(cx + t * dx));
      if (y < 0 || y >= comp.height || x < 0 || x >= comp.width) return false;
      return comp.at(y, x) != 0;
    };
    int pos = 0;
    while (inside(pos + 1)) ++pos;
    int neg = 0;
    while (inside(-(neg + 1))) ++neg;
    out[k] = {pos, neg};
  }
  return out;
}

}  // namespace

TEST_CASE("select_slices: endpoints plus count formula") {
  // 20 foreground slices at ratio 0.10 -> exactly the two endpoints.
  BinaryMask m = stacked_disk_mask({30, 24, 24}, 4, 23, 12, 12, 5);
  std::vector<int> s = select_slices(m, 0.10, 7);
  CHECK(s == std::vector<int>{4, 23});

  // ratio 1.0 returns every foreground slice.
  std::vector<int> all = select_slices(m, 1.0, 7);
  CHECK(all.size() == 20);
  for (int i = 0; i < 20; ++i) CHECK(all[i] == 4 + i);

  // 10 slices at ratio 0.5 -> 5 slices, endpoints included, all foreground.
  BinaryMask m10 = stacked_disk_mask({30, 24, 24}, 8, 17, 12, 12, 5);
  std::vector<int> half = select_slices(m10, 0.5, 3);
  CHECK(half.size() == 5);
  CHECK(half.front() == 8);
  CHECK(half.back() == 17);
  for (int z : half) {
    CHECK(z >= 8);
    CHECK(z <= 17);
  }

  // Determinism and sortedness.
  CHECK(select_slices(m10, 0.5, 3) == half);
  CHECK(std::is_sorted(half.begin(), half.end()));

  BinaryMask empty = BinaryMask::zeros({8, 8, 8});
  CHECK_THROWS_AS(select_slices(empty, 0.5, 1), std::invalid_argument);
}

TEST_CASE("long axis on a symmetric disk ties toward angle 0") {
  // Radius^2 = 110 makes all six rasterized reaches equal.
  Mask2D disk = disk_slice(40, 40, 20, 20, 110.0);
  AnnotationScheme scheme;
  LongAxisInfo info = long_axis_scribble_info(disk, scheme, 9);
  auto reaches = brute_candidates(disk, info.center_y, info.center_x);
  for (int k = 1; k < 6; ++k) {
    CHECK(reaches[k].pos + reaches[k].neg == reaches[0].pos + reaches[0].neg);
  }
  CHECK(info.angle_index == 0);
}

TEST_CASE("long axis of a horizontal bar picks angle 0 and retracts 5 px per end") {
  Mask2D bar = bar_slice(30, 60, 13, 16, 10, 49);  // 40 wide, 4 tall
  AnnotationScheme scheme;
  LongAxisInfo info = long_axis_scribble_info(bar, scheme, 11);

  auto reaches = brute_candidates(bar, info.center_y, info.center_x);
  int best = 0;
  for (int k = 1; k < 6; ++k) {
    if (reaches[k].pos + reaches[k].neg > reaches[best].pos + reaches[best].neg) best = k;
  }
  CHECK(info.angle_index == best);
  CHECK(best == 0);

  // Central line length = bar width - 2 * margin, within rasterization +-1.
  int central = 0;
  for (const PixelYX& p : info.pixels) {
    if (p.y == static_cast<int>(std::llround(info.center_y))) ++central;
  }
  CHECK(central >= 40 - 10 - 1);
  CHECK(central <= 40 - 10 + 1);

  // Width 3: pixels on the rows adjacent to the center line too.
  std::set<int> rows;
  for (const PixelYX& p : info.pixels) rows.insert(p.y);
  CHECK(rows.size() == 3);

  // Endpoint margin: the kept endpoints stay margin steps inside the bar.
  int min_x = 999, max_x = -1;
  for (const PixelYX& p : info.pixels) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
  }
  CHECK(min_x - 10 >= scheme.endpoint_margin - 1);
  CHECK(49 - max_x >= scheme.endpoint_margin - 1);
}

TEST_CASE("scribble pixels always land inside the chosen component") {
  AnnotationScheme scheme;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(900 + seed);
    Mask2D m = Mask2D::zeros(32, 32);
    // Two random blobs, sometimes disconnected.
    for (int b = 0; b < 2; ++b) {
      int cy = static_cast<int>(rng.uniform_int(6, 25));
      int cx = static_cast<int>(rng.uniform_int(6, 25));
      int r = static_cast<int>(rng.uniform_int(2, 5));
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(y, x) = 1;
    }
    if (m.foreground_count() == 0) continue;
    std::vector<PixelYX> scribble = long_axis_scribble(m, scheme, seed);
    CHECK(!scribble.empty());
    for (const PixelYX& p : scribble) CHECK(m.at(p.y, p.x) == 1);
  }
  Mask2D empty = Mask2D::zeros(8, 8);
  CHECK_THROWS_AS(long_axis_scribble(empty, scheme, 1), std::invalid_argument);
}

TEST_CASE("retraction that exhausts the segment collapses to one pixel") {
  Mask2D tiny = bar_slice(16, 16, 7, 8, 6, 9);  // 4x2 blob, reach < margin
  AnnotationScheme scheme;
  std::vector<PixelYX> scribble = long_axis_scribble(tiny, scheme, 2);
  CHECK(scribble.size() == 1);
  CHECK(tiny.at(scribble[0].y, scribble[0].x) == 1);
}

TEST_CASE("loose box respects the offset range and containment") {
  Mask2D region = bar_slice(128, 128, 30, 60, 30, 60);
  AnnotationScheme scheme;
  for (uint64_t seed = 0; seed < 16; ++seed) {
    LooseBox2 box = loose_box(region, scheme, seed);
    CHECK_FALSE(box.clamped);
    CHECK(30 - box.y0 >= 10);
    CHECK(30 - box.y0 <= 20);
    CHECK(box.y1 - 60 >= 10);
    CHECK(box.y1 - 60 <= 20);
    CHECK(30 - box.x0 >= 10);
    CHECK(30 - box.x0 <= 20);
    CHECK(box.x1 - 60 >= 10);
    CHECK(box.x1 - 60 <= 20);
  }
  CHECK(loose_box(region, scheme, 5).y0 == loose_box(region, scheme, 5).y0);

  // A region 5 px from the slice edge clamps (and flags) that edge.
  Mask2D close = bar_slice(64, 64, 5, 20, 30, 40);
  bool saw_clamp = false;
  for (uint64_t seed = 0; seed < 8; ++seed) {
    LooseBox2 box = loose_box(close, scheme, seed);
    if (box.y0 == 0) {
      CHECK(box.clamped);
      saw_clamp = true;
    }
  }
  CHECK(saw_clamp);
}

TEST_CASE("hybrid label: soundness and scribble count bookkeeping") {
  PhantomSpec spec;
  spec.family = PhantomFamily::kBifurcatedTube;
  spec.dims = {32, 48, 48};
  AnnotationScheme scheme;
  scheme.ratio = 1.0;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    PhantomCase c = generate_case(spec, 400 + seed);
    TriLabelMask label = compose_weak_label(c.gt, scheme, seed);

    std::size_t ones = 0;
    for (std::size_t i = 0; i < label.data.size(); ++i) {
      if (label.data[i] == 1) {
        ++ones;
        CHECK(c.gt.data[i] == 1);  // fg labels only inside gt
      }
      if (label.data[i] == 0) {
        CHECK(c.gt.data[i] == 0);  // bg labels never on gt
      }
    }

    // Recount: total labeled-1 voxels equal the per-slice scribble total.
    std::vector<int> slices = select_slices(c.gt, scheme.ratio, mix_seed(seed, 0x51));
    std::size_t want = 0;
    for (int z : slices) {
      uint64_t slice_seed = mix_seed(seed, 0x1000 + static_cast<uint64_t>(z));
      want += long_axis_scribble(slice_of(c.gt, z), scheme, mix_seed(slice_seed, 0xA1)).size();
    }
    CHECK(ones == want);
  }
}

TEST_CASE("slices beyond the foreground range are all background for every kind") {
  PhantomSpec spec;
  spec.dims = {32, 48, 48};
  spec.family = PhantomFamily::kEllipsoid;
  PhantomCase c = generate_case(spec, 77);
  BoundingBox3 box = foreground_bounding_box(c.gt);
  for (AnnotationKind kind : {AnnotationKind::kHybrid, AnnotationKind::kScribbleStar,
                              AnnotationKind::kScribbleDilation, AnnotationKind::kTightBoxOnly}) {
    AnnotationScheme scheme;
    scheme.kind = kind;
    scheme.ratio = 0.3;
    TriLabelMask label = compose_weak_label(c.gt, scheme, 5);
    for (int z = 0; z < c.gt.dims[0]; ++z) {
      if (z >= box.lo[0] && z <= box.hi[0]) continue;
      for (int y = 0; y < c.gt.dims[1]; ++y)
        for (int x = 0; x < c.gt.dims[2]; ++x) CHECK(label.at(z, y, x) == 0);
    }
  }
}

TEST_CASE("hybrid labeled set strictly contains scribble_star's for the same seed") {
  PhantomSpec spec;
  spec.dims = {32, 64, 64};
  spec.family = PhantomFamily::kTube;
  spec.size_min = 0.25;
  spec.size_max = 0.4;
  for (uint64_t seed = 0; seed < 4; ++seed) {
    PhantomCase c = generate_case(spec, 500 + seed);
    AnnotationScheme hybrid, star;
    hybrid.kind = AnnotationKind::kHybrid;
    star.kind = AnnotationKind::kScribbleStar;
    TriLabelMask lh = compose_weak_label(c.gt, hybrid, seed);
    TriLabelMask ls = compose_weak_label(c.gt, star, seed);
    std::size_t h_count = 0, s_count = 0;
    for (std::size_t i = 0; i < lh.data.size(); ++i) {
      bool h_labeled = lh.data[i] != kUnlabeled;
      bool s_labeled = ls.data[i] != kUnlabeled;
      if (s_labeled) {
        CHECK(h_labeled);
        CHECK(lh.data[i] == ls.data[i]);
      }
      h_count += h_labeled;
      s_count += s_labeled;
    }
    CHECK(h_count > s_count);
  }
}

TEST_CASE("weak label composition is deterministic and validates inputs") {
  PhantomSpec spec;
  spec.dims = {24, 48, 48};
  PhantomCase c = generate_case(spec, 88);
  AnnotationScheme scheme;
  TriLabelMask a = compose_weak_label(c.gt, scheme, 123);
  TriLabelMask b = compose_weak_label(c.gt, scheme, 123);
  CHECK(a.data == b.data);
  TriLabelMask d = compose_weak_label(c.gt, scheme, 124);
  CHECK(a.data != d.data);

  BinaryMask empty = BinaryMask::zeros({16, 16, 16});
  CHECK_THROWS_AS(compose_weak_label(empty, scheme, 1), std::invalid_argument);

  AnnotationScheme bad;
  bad.ratio = 0.0;
  CHECK_THROWS_AS(compose_weak_label(c.gt, bad, 1), std::invalid_argument);
  bad = AnnotationScheme{};
  bad.scribble_width = 2;
  CHECK_THROWS_AS(compose_weak_label(c.gt, bad, 1), std::invalid_argument);
}

TEST_CASE("all four kinds are sound on random phantoms") {
  for (PhantomFamily family : {PhantomFamily::kBifurcatedTube, PhantomFamily::kLobedEllipsoid}) {
    PhantomSpec spec;
    spec.family = family;
    spec.dims = {24, 40, 40};
    for (uint64_t seed = 0; seed < 3; ++seed) {
      PhantomCase c = generate_case(spec, 600 + seed);
      for (AnnotationKind kind :
           {AnnotationKind::kHybrid, AnnotationKind::kScribbleStar,
            AnnotationKind::kScribbleDilation, AnnotationKind::kTightBoxOnly}) {
        for (double ratio : {0.1, 0.5, 1.0}) {
          AnnotationScheme scheme;
          scheme.kind = kind;
          scheme.ratio = ratio;
          TriLabelMask label = compose_weak_label(c.gt, scheme, seed);
          for (std::size_t i = 0; i < label.data.size(); ++i) {
            if (label.data[i] == 1) CHECK(c.gt.data[i] == 1);
            if (label.data[i] == 0) CHECK(c.gt.data[i] == 0);
          }
        }
      }
    }
  }
}
