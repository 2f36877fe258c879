#include "vseg/pipeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "vseg/rng.hpp"

namespace vseg {

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.dims != gt.dims) throw std::invalid_argument("dice: dims mismatch");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    a += pred.data[i];
    b += gt.data[i];
    inter += pred.data[i] & gt.data[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

void IterConfig::validate() const {
  if (lambda_w < 0 || lambda_p < 0) throw std::invalid_argument("lambdas must be >= 0");
  if (lambda_w == 0 && lambda_p == 0) throw std::invalid_argument("at least one lambda must be > 0");
  if (iter_epochs < 1) throw std::invalid_argument("iter_epochs must be >= 1");
  if (iter_lr < 0) throw std::invalid_argument("iter_lr must be >= 0");
  if (max_iterations < 0) throw std::invalid_argument("max_iterations must be >= 0");
}

void PipelineConfig::validate() const {
  net.validate();
  ssn_train.validate();
  aug.validate();
  iter.validate();
  filter.validate();
  if (sdn_epochs < 0) throw std::invalid_argument("sdn_epochs must be >= 0");
  if (sdn_lr < 0) throw std::invalid_argument("sdn_lr must be >= 0");
  if (template_rank < 1) throw std::invalid_argument("template_rank must be >= 1");
  if (!(crop_scale > 0)) throw std::invalid_argument("crop_scale must be > 0");
}

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoShapePrior: return "no_shape_prior";
    case Ablation::kNoIterative: return "no_iterative";
    case Ablation::kBaseline: return "baseline";
    case Ablation::kPseudoOnly: return "pseudo_only";
  }
  return "?";
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "full") return Ablation::kFull;
  if (name == "no_shape_prior") return Ablation::kNoShapePrior;
  if (name == "no_iterative") return Ablation::kNoIterative;
  if (name == "baseline") return Ablation::kBaseline;
  if (name == "pseudo_only") return Ablation::kPseudoOnly;
  throw std::invalid_argument("unknown ablation: " + name);
}

const char* annotation_kind_name(AnnotationKind k) {
  switch (k) {
    case AnnotationKind::kHybrid: return "hybrid";
    case AnnotationKind::kScribbleStar: return "scribble_star";
    case AnnotationKind::kScribbleDilation: return "scribble_dilation";
    case AnnotationKind::kTightBoxOnly: return "tight_box_only";
  }
  return "?";
}

AnnotationKind annotation_kind_from_name(const std::string& name) {
  if (name == "hybrid") return AnnotationKind::kHybrid;
  if (name == "scribble_star") return AnnotationKind::kScribbleStar;
  if (name == "scribble_dilation") return AnnotationKind::kScribbleDilation;
  if (name == "tight_box_only") return AnnotationKind::kTightBoxOnly;
  throw std::invalid_argument("unknown annotation kind: " + name);
}

std::vector<TriLabelMask> make_weak_labels(const std::vector<PhantomCase>& train,
                                           const AnnotationScheme& scheme, uint64_t seed) {
  std::vector<TriLabelMask> out;
  out.reserve(train.size());
  for (const PhantomCase& c : train) {
    out.push_back(compose_weak_label(c.gt, scheme, mix_seed(seed, 0x3EA8 + static_cast<uint64_t>(c.case_id))));
  }
  return out;
}

namespace {

bool same_spacing(const Spacing3& a, const Spacing3& b) {
  return a[0] == b[0] && a[1] == b[1] && a[2] == b[2];
}

/// Crop box of `c` in its own frame (the dataset box shifted by the case's
/// center-alignment offset).
BoundingBox3 local_crop_box(const InitResult& ctx, const Dims3& case_dims) {
  BoundingBox3 local = ctx.crop_box;
  for (int a = 0; a < 3; ++a) {
    int off = (ctx.common_dims[a] - case_dims[a]) / 2;
    local.lo[a] -= off;
    local.hi[a] -= off;
  }
  return local;
}

}  // namespace

namespace {

/// Resample + prior crop: fills the geometric context and cropped data.
void prepare_context(InitResult& init, const std::vector<PhantomCase>& train,
                     const std::vector<TriLabelMask>& weak, const PipelineConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("initialization: empty dataset");
  if (train.size() != weak.size()) {
    throw std::invalid_argument("initialization: one weak label per training case required");
  }
  std::vector<std::pair<VolumeImage, TriLabelMask>> cases;
  cases.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (same_spacing(train[i].image.spacing, cfg.target_spacing)) {
      cases.emplace_back(train[i].image, weak[i]);
    } else {
      cases.emplace_back(resample(train[i].image, cfg.target_spacing),
                         resample(weak[i], cfg.target_spacing));
    }
  }
  PriorCropResult crop = prior_crop_dataset(cases, cfg.crop_scale, cfg.net.total_stride());
  init.crop_box = crop.box;
  init.common_dims = crop.common_dims;
  for (auto& [image, label] : crop.cases) {
    init.train_images.push_back(std::move(image));
    init.weak_labels.push_back(std::move(label));
  }
}

void predict_train(InitResult& init, const std::vector<PhantomCase>& train) {
  init.train_predictions.clear();
  for (std::size_t i = 0; i < init.train_images.size(); ++i) {
    auto [p, m] = predict_ssn(init.ssn, init.train_images[i]);
    init.train_predictions.push_back({train[i].case_id, std::move(p), std::move(m)});
  }
}

}  // namespace

void attach_sdn(InitResult& init, const PipelineConfig& cfg, uint64_t seed) {
  ShapeTemplate tmpl = select_template(init.train_predictions, cfg.template_rank);
  NoiseAugConfig aug = cfg.aug;
  aug.seed = mix_seed(seed, 0x5D4);
  init.sdn = train_sdn(tmpl, cfg.net, aug, cfg.sdn_epochs, cfg.sdn_lr, cfg.sdn_momentum);
  init.has_sdn = true;
}

InitResult run_initialization_with_labels(const std::vector<PhantomCase>& train,
                                          std::vector<TriLabelMask> weak,
                                          const PipelineConfig& cfg, uint64_t seed,
                                          bool with_sdn) {
  cfg.validate();
  InitResult init;
  prepare_context(init, train, weak, cfg);

  std::vector<std::pair<VolumeImage, TriLabelMask>> train_cases;
  for (std::size_t i = 0; i < init.train_images.size(); ++i) {
    train_cases.emplace_back(init.train_images[i], init.weak_labels[i]);
  }
  SSNTrainConfig tcfg = cfg.ssn_train;
  tcfg.seed = mix_seed(seed, 0x55B);
  init.ssn = train_ssn(train_cases, cfg.net, tcfg);

  predict_train(init, train);
  if (with_sdn) attach_sdn(init, cfg, seed);
  return init;
}

InitResult run_initialization(const std::vector<PhantomCase>& train,
                              const AnnotationScheme& scheme, const PipelineConfig& cfg,
                              uint64_t seed, bool with_sdn) {
  return run_initialization_with_labels(train, make_weak_labels(train, scheme, seed), cfg, seed,
                                        with_sdn);
}

InitResult make_context(SSNModel ssn, const std::vector<PhantomCase>& train,
                        std::vector<TriLabelMask> weak, const PipelineConfig& cfg) {
  InitResult init;
  prepare_context(init, train, weak, cfg);
  init.ssn = std::move(ssn);
  predict_train(init, train);
  return init;
}

CaseMetrics evaluate_case(const InitResult& ctx, const PhantomCase& c) {
  const VolumeImage* image = &c.image;
  const BinaryMask* gt = &c.gt;
  VolumeImage resampled_image;
  BinaryMask resampled_gt;
  if (!same_spacing(c.image.spacing, ctx.train_images.front().spacing)) {
    resampled_image = resample(c.image, ctx.train_images.front().spacing);
    resampled_gt = resample(c.gt, ctx.train_images.front().spacing);
    image = &resampled_image;
    gt = &resampled_gt;
  }

  BoundingBox3 local = local_crop_box(ctx, image->dims);
  VolumeImage cropped = crop_to_box(*image, local, 0.0f);
  auto [p, m] = predict_ssn(ctx.ssn, cropped);

  // Back to the case frame; everything outside the crop counts as background.
  BinaryMask pred_full = crop_to_box(m, local.inverse(image->dims), uint8_t{0});
  pred_full.spacing = gt->spacing;

  CaseMetrics out;
  out.case_id = c.case_id;
  out.dice_ssn = dice(pred_full, *gt);
  if (ctx.has_sdn) {
    auto [pd, md] = denoise(ctx.sdn, m);
    BinaryMask refined_full = crop_to_box(md, local.inverse(image->dims), uint8_t{0});
    refined_full.spacing = gt->spacing;
    out.dice_sdn = dice(refined_full, *gt);
  }
  return out;
}

namespace {

// SSN-only dice, skipping the denoiser forward that evaluate_case also runs.
double case_dice_ssn(const InitResult& ctx, const PhantomCase& c) {
  const VolumeImage* image = &c.image;
  const BinaryMask* gt = &c.gt;
  VolumeImage resampled_image;
  BinaryMask resampled_gt;
  if (!same_spacing(c.image.spacing, ctx.train_images.front().spacing)) {
    resampled_image = resample(c.image, ctx.train_images.front().spacing);
    resampled_gt = resample(c.gt, ctx.train_images.front().spacing);
    image = &resampled_image;
    gt = &resampled_gt;
  }
  BoundingBox3 local = local_crop_box(ctx, image->dims);
  auto [p, m] = predict_ssn(ctx.ssn, crop_to_box(*image, local, 0.0f));
  BinaryMask pred_full = crop_to_box(m, local.inverse(image->dims), uint8_t{0});
  pred_full.spacing = gt->spacing;
  return dice(pred_full, *gt);
}

double mean_dice_ssn(const InitResult& ctx, const std::vector<PhantomCase>& cases) {
  if (cases.empty()) return 0.0;
  double sum = 0;
  for (const PhantomCase& c : cases) sum += case_dice_ssn(ctx, c);
  return sum / static_cast<double>(cases.size());
}

}  // namespace

std::vector<IterationReport> run_iterations(InitResult& init,
                                            const std::vector<PhantomCase>& train,
                                            const std::vector<PhantomCase>& val,
                                            const PipelineConfig& cfg, bool use_shape_gate,
                                            double lambda_w, double lambda_p, uint64_t seed) {
  cfg.validate();
  if (use_shape_gate && !init.has_sdn) {
    throw std::invalid_argument("run_iterations: shape gate requested without a denoiser");
  }
  if (use_shape_gate && !init.sdn.frozen) {
    throw std::logic_error("run_iterations: denoiser must be frozen");
  }
  const uint64_t sdn_checksum = init.has_sdn ? init.sdn.params.checksum() : 0;

  std::vector<const VolumeImage*> images;
  for (const VolumeImage& v : init.train_images) images.push_back(&v);

  std::vector<IterationReport> reports;
  for (int iter = 1; iter <= cfg.iter.max_iterations; ++iter) {
    std::vector<TriLabelMask> pseudo;
    pseudo.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      auto [p, m] = predict_ssn(init.ssn, *images[i]);
      Thresholds th = compute_thresholds(p, m, cfg.filter);
      if (use_shape_gate) {
        auto [pd, md] = denoise(init.sdn, m);
        pseudo.push_back(make_pseudo_label(m, md, p, th));
      } else {
        pseudo.push_back(make_pseudo_label(m, p, th));
      }
    }

    std::vector<WeightedLabels> supervision(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      supervision[i].terms = {{&init.weak_labels[i], lambda_w}, {&pseudo[i], lambda_p}};
    }
    std::size_t history_before = init.ssn.training_history.size();
    train_ssn_terms(init.ssn, images, supervision, cfg.iter.iter_epochs, cfg.iter.iter_lr,
                    cfg.ssn_train.momentum, cfg.ssn_train.batch_size,
                    mix_seed(seed, 0x17E4 + static_cast<uint64_t>(iter)));

    if (init.has_sdn && init.sdn.params.checksum() != sdn_checksum) {
      throw std::logic_error("run_iterations: frozen denoiser parameters changed");
    }

    IterationReport rep;
    rep.iteration = iter;
    double loss_sum = 0;
    for (std::size_t e = history_before; e < init.ssn.training_history.size(); ++e) {
      loss_sum += init.ssn.training_history[e];
    }
    std::size_t n_epochs = init.ssn.training_history.size() - history_before;
    rep.mean_loss = n_epochs > 0 ? loss_sum / static_cast<double>(n_epochs) : 0.0;
    rep.train_mean_dice_ssn = mean_dice_ssn(init, train);
    rep.val_mean_dice_ssn = mean_dice_ssn(init, val);
    reports.push_back(rep);
  }
  return reports;
}

namespace {

void fill_split_metrics(const InitResult& ctx, const std::vector<PhantomCase>& cases,
                        std::vector<CaseMetrics>& out, double& mean_ssn, double& mean_sdn) {
  out.clear();
  if (cases.empty()) {
    mean_ssn = -1.0;
    mean_sdn = -1.0;
    return;
  }
  double sum_ssn = 0, sum_sdn = 0;
  for (const PhantomCase& c : cases) {
    out.push_back(evaluate_case(ctx, c));
    sum_ssn += out.back().dice_ssn;
    sum_sdn += out.back().dice_sdn;
  }
  mean_ssn = sum_ssn / static_cast<double>(cases.size());
  mean_sdn = ctx.has_sdn ? sum_sdn / static_cast<double>(cases.size()) : -1.0;
}

struct CellKey {
  double ratio;
  AnnotationKind kind;
  bool with_sdn;
  bool operator<(const CellKey& o) const {
    if (ratio != o.ratio) return ratio < o.ratio;
    if (kind != o.kind) return kind < o.kind;
    return with_sdn < o.with_sdn;
  }
};

}  // namespace

ExperimentReport run_single(const PhantomDataset& data, const AnnotationScheme& scheme_base,
                            double ratio, AnnotationKind kind, Ablation ablation,
                            const PipelineConfig& cfg, uint64_t master_seed,
                            const std::string& config_fingerprint) {
  ExperimentGrid grid{{ratio}, {kind}, {ablation}};
  return run_experiment(data, scheme_base, grid, cfg, master_seed, config_fingerprint).front();
}

std::vector<ExperimentReport> run_experiment(const PhantomDataset& data,
                                             const AnnotationScheme& scheme_base,
                                             const ExperimentGrid& grid,
                                             const PipelineConfig& cfg, uint64_t master_seed,
                                             const std::string& config_fingerprint) {
  if (grid.ratios.empty() || grid.schemes.empty() || grid.ablations.empty()) {
    throw std::invalid_argument("run_experiment: empty grid");
  }
  // Initializations are pure functions of (data, scheme, cfg, seed), so cells
  // sharing coordinates reuse one result; reports match isolated runs bit for
  // bit.
  std::map<CellKey, InitResult> init_cache;

  std::vector<ExperimentReport> reports;
  for (double ratio : grid.ratios) {
    for (AnnotationKind kind : grid.schemes) {
      for (Ablation ablation : grid.ablations) {
        AnnotationScheme scheme = scheme_base;
        scheme.ratio = ratio;
        scheme.kind = kind;
        bool needs_sdn = ablation == Ablation::kFull || ablation == Ablation::kNoIterative ||
                         ablation == Ablation::kPseudoOnly;
        CellKey key{ratio, kind, needs_sdn};
        auto it = init_cache.find(key);
        if (it == init_cache.end()) {
          it = init_cache
                   .emplace(key,
                            run_initialization(data.train, scheme, cfg, master_seed, needs_sdn))
                   .first;
        }
        InitResult init = it->second;  // copy: iterations mutate the SSN

        ExperimentReport rep;
        rep.ablation = ablation_name(ablation);
        rep.scheme = annotation_kind_name(kind);
        rep.ratio = ratio;
        rep.master_seed = master_seed;
        rep.fingerprint = config_fingerprint + "|ratio=" + std::to_string(ratio) +
                          "|scheme=" + rep.scheme + "|ablation=" + rep.ablation +
                          "|seed=" + std::to_string(master_seed);
        rep.init_loss_curve = init.ssn.training_history;

        bool iterate = ablation == Ablation::kFull || ablation == Ablation::kNoShapePrior ||
                       ablation == Ablation::kPseudoOnly;
        if (iterate) {
          double lw = ablation == Ablation::kPseudoOnly ? 0.0 : cfg.iter.lambda_w;
          bool gate = ablation != Ablation::kNoShapePrior;
          rep.iterations = run_iterations(init, data.train, data.val, cfg, gate, lw,
                                          cfg.iter.lambda_p, mix_seed(master_seed, 0x17E0));
        }
        fill_split_metrics(init, data.val, rep.val_cases, rep.val_mean_dice_ssn,
                           rep.val_mean_dice_sdn);
        fill_split_metrics(init, data.test, rep.test_cases, rep.test_mean_dice_ssn,
                           rep.test_mean_dice_sdn);
        reports.push_back(std::move(rep));
      }
    }
  }
  return reports;
}

}  // namespace vseg
