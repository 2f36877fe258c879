#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "vseg/fusion.hpp"
#include "vseg/rng.hpp"

using namespace vseg;

namespace {

ProbabilityVolume random_probs(const Dims3& dims, uint64_t seed) {
  ProbabilityVolume p;
  p.dims = dims;
  p.data.resize(voxel_count(dims));
  Rng rng(seed);
  for (auto& v : p.data) v = static_cast<float>(rng.next_double());
  return p;
}

BinaryMask predicted_mask(const ProbabilityVolume& p) { return threshold_above(p, 0.5f); }

ProbabilityVolume from_values(std::vector<float> values) {
  ProbabilityVolume p;
  p.dims = {1, 1, static_cast<int>(values.size())};
  p.data = std::move(values);
  return p;
}

}  // namespace

TEST_CASE("thresholds: tie saturation filters every foreground voxel") {
  ProbabilityVolume p = from_values({0.9f, 0.9f, 0.9f, 0.9f, 0.2f, 0.2f});
  BinaryMask m = predicted_mask(p);
  FilterConfig cfg;
  cfg.fg_filter_fraction = 0.7;
  Thresholds th = compute_thresholds(p, m, cfg);
  CHECK(th.sigma_fg == doctest::Approx(0.9).epsilon(1e-7));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK_FALSE(p.data[i] > th.sigma_fg);  // strict inequality fails at the tie
  }
}

TEST_CASE("thresholds: rank-statistic hand count") {
  // fg probs {0.6,0.7,0.8,0.9,0.95}, fraction 0.5 -> 2 filtered; K=2 means 4
  // background voxels get filtered by sigma_bg.
  ProbabilityVolume p = from_values(
      {0.6f, 0.7f, 0.8f, 0.9f, 0.95f, 0.05f, 0.10f, 0.15f, 0.20f, 0.25f, 0.30f, 0.35f});
  BinaryMask m = predicted_mask(p);
  FilterConfig cfg;
  cfg.fg_filter_fraction = 0.5;
  Thresholds th = compute_thresholds(p, m, cfg);
  CHECK(th.sigma_fg == doctest::Approx(0.7).epsilon(1e-7));

  int fg_filtered = 0, bg_filtered = 0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    if (m.data[i] && !(p.data[i] > th.sigma_fg)) ++fg_filtered;
    if (!m.data[i] && !(p.data[i] < th.sigma_bg)) ++bg_filtered;
  }
  CHECK(fg_filtered == 2);
  CHECK(bg_filtered == 4);
}

TEST_CASE("thresholds: empty prediction degenerates to (1, 0.5)") {
  ProbabilityVolume p = from_values({0.1f, 0.2f, 0.3f});
  BinaryMask m = predicted_mask(p);
  Thresholds th = compute_thresholds(p, m, FilterConfig{});
  CHECK(th.sigma_fg == 1.0);
  CHECK(th.sigma_bg == 0.5);
}

TEST_CASE("thresholds validate the m = 1(p > 0.5) precondition") {
  ProbabilityVolume p = from_values({0.9f, 0.1f});
  BinaryMask m = predicted_mask(p);
  m.data[1] = 1;
  CHECK_THROWS_AS(compute_thresholds(p, m, FilterConfig{}), std::invalid_argument);
}

TEST_CASE("threshold count contract against a sort oracle on random volumes") {
  FilterConfig cfg;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    cfg.fg_filter_fraction = (seed % 2) ? 0.7 : 0.5;
    ProbabilityVolume p = random_probs({4, 5, 5}, 1000 + seed);
    BinaryMask m = predicted_mask(p);
    Thresholds th = compute_thresholds(p, m, cfg);

    // Oracle: sort a copy, count with the strict gates.
    std::vector<float> fg, bg;
    for (std::size_t i = 0; i < p.data.size(); ++i) (m.data[i] ? fg : bg).push_back(p.data[i]);
    std::size_t want_fg_filtered = static_cast<std::size_t>(cfg.fg_filter_fraction * fg.size());
    std::size_t got_fg_filtered = 0;
    for (float v : fg) got_fg_filtered += !(v > th.sigma_fg);
    CHECK(got_fg_filtered == want_fg_filtered);

    std::size_t want_bg = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.bg_count_multiplier * got_fg_filtered), bg.size());
    std::size_t got_bg = 0;
    for (float v : bg) got_bg += !(v < th.sigma_bg);
    CHECK(got_bg == want_bg);

    CHECK(th.sigma_fg > th.sigma_bg);
  }
}

TEST_CASE("pseudo label matches the direct gate evaluation") {
  ProbabilityVolume p = from_values({0.9f, 0.6f, 0.2f});
  BinaryMask m_s = predicted_mask(p);
  BinaryMask m_d = m_s;
  m_d.data[1] = 0;
  Thresholds th{0.7, 0.3};
  TriLabelMask y = make_pseudo_label(m_s, m_d, p, th);
  CHECK(y.data[0] == 1);
  CHECK(y.data[1] == kUnlabeled);
  CHECK(y.data[2] == 0);
}

TEST_CASE("full agreement gives a dense label equal to the prediction") {
  ProbabilityVolume p = from_values({0.95f, 0.9f, 0.05f, 0.1f});
  BinaryMask m = predicted_mask(p);
  Thresholds th{0.6, 0.4};
  TriLabelMask y = make_pseudo_label(m, m, p, th);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    CHECK(y.data[i] == m.data[i]);
  }
}

TEST_CASE("total disagreement yields an all-unlabeled pseudo label") {
  ProbabilityVolume p = from_values({0.9f, 0.1f});
  BinaryMask m_s = predicted_mask(p);
  BinaryMask m_d = m_s;
  for (auto& v : m_d.data) v = 1 - v;
  Thresholds th{0.6, 0.4};
  TriLabelMask y = make_pseudo_label(m_s, m_d, p, th);
  for (uint8_t v : y.data) CHECK(v == kUnlabeled);
}

TEST_CASE("pseudo label brute-force equivalence, disjointness, and subsets") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    ProbabilityVolume p = random_probs({3, 4, 4}, 2000 + seed);
    BinaryMask m_s = predicted_mask(p);
    BinaryMask m_d = BinaryMask::zeros(p.dims);
    Rng rng(3000 + seed);
    for (auto& v : m_d.data) v = rng.bernoulli(0.5) ? 1 : 0;
    Thresholds th = compute_thresholds(p, m_s, FilterConfig{});
    TriLabelMask y = make_pseudo_label(m_s, m_d, p, th);

    for (std::size_t i = 0; i < y.data.size(); ++i) {
      bool fg = m_s.data[i] && m_d.data[i] && p.data[i] > th.sigma_fg;
      bool bg = !m_s.data[i] && !m_d.data[i] && p.data[i] < th.sigma_bg;
      CHECK_FALSE((fg && bg));
      uint8_t want = fg ? 1 : (bg ? 0 : kUnlabeled);
      CHECK(y.data[i] == want);
      if (y.data[i] == 1) {
        CHECK(m_s.data[i] == 1);
        CHECK(m_d.data[i] == 1);
      }
      if (y.data[i] == 0) {
        CHECK(m_s.data[i] == 0);
        CHECK(m_d.data[i] == 0);
      }
    }
  }
}

TEST_CASE("raising sigma_fg or lowering sigma_bg never adds labels") {
  ProbabilityVolume p = random_probs({3, 4, 4}, 77);
  BinaryMask m_s = predicted_mask(p);
  BinaryMask m_d = m_s;
  Thresholds base{0.7, 0.3};
  TriLabelMask y0 = make_pseudo_label(m_s, m_d, p, base);
  TriLabelMask y1 = make_pseudo_label(m_s, m_d, p, Thresholds{0.8, 0.2});
  std::size_t fg0 = 0, fg1 = 0, bg0 = 0, bg1 = 0;
  for (std::size_t i = 0; i < y0.data.size(); ++i) {
    fg0 += y0.data[i] == 1;
    fg1 += y1.data[i] == 1;
    bg0 += y0.data[i] == 0;
    bg1 += y1.data[i] == 0;
    if (y1.data[i] == 1) CHECK(y0.data[i] == 1);
    if (y1.data[i] == 0) CHECK(y0.data[i] == 0);
  }
  CHECK(fg1 <= fg0);
  CHECK(bg1 <= bg0);
}

TEST_CASE("shape-gate-free variant drops only the denoiser factors") {
  ProbabilityVolume p = random_probs({2, 3, 3}, 88);
  BinaryMask m_s = predicted_mask(p);
  Thresholds th{0.7, 0.3};
  TriLabelMask y = make_pseudo_label(m_s, p, th);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    bool fg = m_s.data[i] && p.data[i] > th.sigma_fg;
    bool bg = !m_s.data[i] && p.data[i] < th.sigma_bg;
    uint8_t want = fg ? 1 : (bg ? 0 : kUnlabeled);
    CHECK(y.data[i] == want);
  }
}

TEST_CASE("invalid inputs are rejected") {
  ProbabilityVolume p = random_probs({2, 2, 2}, 5);
  BinaryMask m_s = predicted_mask(p);
  BinaryMask wrong = BinaryMask::zeros({2, 2, 3});
  CHECK_THROWS_AS(make_pseudo_label(m_s, wrong, p, Thresholds{0.7, 0.3}), std::invalid_argument);
  Thresholds equal{0.4, 0.4};
  CHECK_THROWS_AS(equal.validate(), std::invalid_argument);
  FilterConfig bad;
  bad.fg_filter_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = FilterConfig{};
  bad.bg_count_multiplier = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
