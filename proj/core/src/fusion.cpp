#include "vseg/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace vseg {

void FilterConfig::validate() const {
  if (fg_filter_fraction < 0.0 || fg_filter_fraction >= 1.0) {
    throw std::invalid_argument("fg_filter_fraction must be in [0,1)");
  }
  if (!(bg_count_multiplier > 0.0)) {
    throw std::invalid_argument("bg_count_multiplier must be > 0");
  }
}

void Thresholds::validate() const {
  if (!(sigma_fg > sigma_bg)) {
    throw std::invalid_argument("thresholds must satisfy sigma_fg > sigma_bg");
  }
}

Thresholds compute_thresholds(const ProbabilityVolume& p_s, const BinaryMask& m_s,
                              const FilterConfig& cfg) {
  cfg.validate();
  if (p_s.dims != m_s.dims) throw std::invalid_argument("compute_thresholds: dims mismatch");
  for (std::size_t i = 0; i < p_s.data.size(); ++i) {
    bool predicted = p_s.data[i] > 0.5f;
    if (predicted != (m_s.data[i] != 0)) {
      throw std::invalid_argument("compute_thresholds: m_s is not 1(p_s > 0.5)");
    }
  }

  std::vector<float> fg, bg;
  for (std::size_t i = 0; i < p_s.data.size(); ++i) {
    (m_s.data[i] ? fg : bg).push_back(p_s.data[i]);
  }

  Thresholds th;
  if (fg.empty()) {
    th.sigma_fg = 1.0;
    th.sigma_bg = 0.5;
    th.validate();
    return th;
  }

  std::sort(fg.begin(), fg.end());
  const std::size_t n_fg = fg.size();
  const std::size_t r = static_cast<std::size_t>(std::floor(cfg.fg_filter_fraction * n_fg));
  if (r == 0) {
    // Nothing to filter: any cutoff below the smallest foreground probability
    // keeps everything; the midpoint stays strictly above sigma_bg.
    th.sigma_fg = 0.5 + (static_cast<double>(fg.front()) - 0.5) / 2.0;
  } else {
    th.sigma_fg = fg[r - 1];  // r-th smallest; ties fail the strict p > sigma_fg
  }

  std::size_t filtered_fg = 0;
  for (float v : fg) {
    if (!(v > th.sigma_fg)) ++filtered_fg;
  }

  const std::size_t target_bg = std::min(
      static_cast<std::size_t>(std::floor(cfg.bg_count_multiplier * filtered_fg)), bg.size());
  if (target_bg == 0) {
    th.sigma_bg = 0.5;
  } else {
    std::sort(bg.begin(), bg.end(), std::greater<float>());
    th.sigma_bg = bg[target_bg - 1];  // exactly target_bg fail the strict p < sigma_bg
  }
  th.validate();
  return th;
}

namespace {

TriLabelMask fuse(const BinaryMask& m_s, const BinaryMask* m_d, const ProbabilityVolume& p_s,
                  const Thresholds& th) {
  if (p_s.dims != m_s.dims || (m_d && m_d->dims != m_s.dims)) {
    throw std::invalid_argument("make_pseudo_label: dims mismatch");
  }
  th.validate();
  TriLabelMask out = TriLabelMask::unlabeled(m_s.dims, m_s.spacing);
  for (std::size_t i = 0; i < m_s.data.size(); ++i) {
    const bool in_s = m_s.data[i] != 0;
    const double p = p_s.data[i];
    const bool fg = in_s && (m_d ? m_d->data[i] != 0 : true) && p > th.sigma_fg;
    const bool bg = !in_s && (m_d ? m_d->data[i] == 0 : true) && p < th.sigma_bg;
    if (fg) {
      out.data[i] = 1;
    } else if (bg) {
      out.data[i] = 0;
    }
  }
  return out;
}

}  // namespace

TriLabelMask make_pseudo_label(const BinaryMask& m_s, const BinaryMask& m_d,
                               const ProbabilityVolume& p_s, const Thresholds& th) {
  return fuse(m_s, &m_d, p_s, th);
}

TriLabelMask make_pseudo_label(const BinaryMask& m_s, const ProbabilityVolume& p_s,
                               const Thresholds& th) {
  return fuse(m_s, nullptr, p_s, th);
}

}  // namespace vseg
