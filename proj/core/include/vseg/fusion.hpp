#pragma once

#include "vseg/volume.hpp"

namespace vseg {

struct FilterConfig {
  double fg_filter_fraction = 0.7;  // least-confident fraction of predicted fg to drop
  double bg_count_multiplier = 2.0; // dropped bg count = multiplier * dropped fg count

  void validate() const;
  bool operator==(const FilterConfig&) const = default;
};

/// Per-volume confidence cutoffs; foreground keeps p > sigma_fg, background
/// keeps p < sigma_bg.
struct Thresholds {
  double sigma_fg = 1.0;
  double sigma_bg = 0.5;

  void validate() const;  // enforces sigma_fg > sigma_bg
};

/// Rank-statistic thresholds over the prediction: sigma_fg is the
/// floor(fraction*N_fg)-th smallest predicted-foreground probability (so ties
/// fall on the filtered side), sigma_bg is picked over predicted-background
/// probabilities so that min(floor(multiplier*K), N_bg) of them fail p <
/// sigma_bg, where K counts the filtered foreground. Empty predictions yield
/// the degenerate (1, 0.5).
Thresholds compute_thresholds(const ProbabilityVolume& p_s, const BinaryMask& m_s,
                              const FilterConfig& cfg);

/// Pseudo-label fusion:
///   fg(v) = m_s * m_d * 1(p > sigma_fg), bg(v) = (1-m_s) * (1-m_d) * 1(p < sigma_bg),
/// label 1 where fg, 0 where bg, unlabeled elsewhere.
TriLabelMask make_pseudo_label(const BinaryMask& m_s, const BinaryMask& m_d,
                               const ProbabilityVolume& p_s, const Thresholds& th);

/// Shape-gate-free variant (drops the m_d factors).
TriLabelMask make_pseudo_label(const BinaryMask& m_s, const ProbabilityVolume& p_s,
                               const Thresholds& th);

}  // namespace vseg
