#pragma once

#include <string>
#include <vector>

#include "vseg/fusion.hpp"
#include "vseg/phantom.hpp"
#include "vseg/sdn.hpp"
#include "vseg/ssn.hpp"
#include "vseg/weaklabel.hpp"

namespace vseg {

/// 2|A∩B| / (|A|+|B|); both empty -> 1.
double dice(const BinaryMask& pred, const BinaryMask& gt);

struct IterConfig {
  double lambda_w = 1.0;
  double lambda_p = 100.0;
  int iter_epochs = 20;
  double iter_lr = 1e-3;
  int max_iterations = 3;

  void validate() const;
  bool operator==(const IterConfig&) const = default;
};

enum class Ablation { kFull, kNoShapePrior, kNoIterative, kBaseline, kPseudoOnly };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);
const char* annotation_kind_name(AnnotationKind k);
AnnotationKind annotation_kind_from_name(const std::string& name);

struct PipelineConfig {
  UNetConfig net = UNetConfig::make(2, 8);
  SSNTrainConfig ssn_train;
  NoiseAugConfig aug;
  int sdn_epochs = 300;
  double sdn_lr = 1e-2;
  double sdn_momentum = 0.9;
  int template_rank = 1;
  IterConfig iter;
  FilterConfig filter;
  double crop_scale = 1.2;
  Spacing3 target_spacing{1.0, 1.0, 1.0};

  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

struct CaseMetrics {
  int case_id = 0;
  double dice_ssn = 0.0;
  double dice_sdn = -1.0;  // -1 when the run has no denoiser
};

struct IterationReport {
  int iteration = 0;
  double mean_loss = 0.0;
  double train_mean_dice_ssn = 0.0;
  double val_mean_dice_ssn = 0.0;
};

struct ExperimentReport {
  std::string ablation;
  std::string scheme;
  double ratio = 0.0;
  uint64_t master_seed = 0;
  std::string fingerprint;
  std::vector<double> init_loss_curve;
  std::vector<IterationReport> iterations;
  std::vector<CaseMetrics> val_cases;
  std::vector<CaseMetrics> test_cases;
  double val_mean_dice_ssn = 0.0;
  double val_mean_dice_sdn = -1.0;
  double test_mean_dice_ssn = -1.0;
  double test_mean_dice_sdn = -1.0;

  bool operator==(const ExperimentReport&) const = default;
};

inline bool operator==(const CaseMetrics& a, const CaseMetrics& b) {
  return a.case_id == b.case_id && a.dice_ssn == b.dice_ssn && a.dice_sdn == b.dice_sdn;
}
inline bool operator==(const IterationReport& a, const IterationReport& b) {
  return a.iteration == b.iteration && a.mean_loss == b.mean_loss &&
         a.train_mean_dice_ssn == b.train_mean_dice_ssn &&
         a.val_mean_dice_ssn == b.val_mean_dice_ssn;
}

/// Everything later stages need: the trained models plus the preprocessing
/// frame (resample spacing + dataset crop box) that maps any case into the
/// network's input geometry.
struct InitResult {
  SSNModel ssn;
  SDNModel sdn;
  bool has_sdn = false;
  std::vector<Prediction> train_predictions;  // in the crop frame
  BoundingBox3 crop_box;                      // in the center-aligned common frame
  Dims3 common_dims{0, 0, 0};
  std::vector<VolumeImage> train_images;   // cropped
  std::vector<TriLabelMask> weak_labels;   // cropped
};

/// Weak labels for the training split, one derived seed per case.
std::vector<TriLabelMask> make_weak_labels(const std::vector<PhantomCase>& train,
                                           const AnnotationScheme& scheme, uint64_t seed);

/// compose_weak_label -> resample -> prior crop -> train SSN -> predict the
/// training split -> select the confidence-rank template -> train the (frozen)
/// denoiser. Set with_sdn=false for runs that never consult the shape prior.
InitResult run_initialization(const std::vector<PhantomCase>& train,
                              const AnnotationScheme& scheme, const PipelineConfig& cfg,
                              uint64_t seed, bool with_sdn = true);

/// Same, with precomposed weak labels (the file-based staged path). Seed
/// derivations match run_initialization, so staged and monolithic runs agree
/// bit for bit.
InitResult run_initialization_with_labels(const std::vector<PhantomCase>& train,
                                          std::vector<TriLabelMask> weak,
                                          const PipelineConfig& cfg, uint64_t seed,
                                          bool with_sdn = true);

/// Trains the frozen denoiser on the initialized model's training predictions.
void attach_sdn(InitResult& init, const PipelineConfig& cfg, uint64_t seed);

/// Rebuilds the preprocessing context and training predictions around an
/// already-trained model (for stages that load checkpoints).
InitResult make_context(SSNModel ssn, const std::vector<PhantomCase>& train,
                        std::vector<TriLabelMask> weak, const PipelineConfig& cfg);

/// Maps a case into the crop frame, predicts, and evaluates in the case's
/// full frame (outside-crop voxels count as background). dice_sdn refines the
/// predicted mask through the denoiser when one is present.
CaseMetrics evaluate_case(const InitResult& ctx, const PhantomCase& c);

/// Iterative refinement: per iteration, per training case, predict -> denoise
/// -> per-volume thresholds -> pseudo-label -> continue SSN training on
/// lambda_w * weak + lambda_p * pseudo. The denoiser is frozen; its checksum
/// is asserted every iteration. use_shape_gate=false drops the denoiser
/// factors from the pseudo-label (and skips denoising entirely).
std::vector<IterationReport> run_iterations(InitResult& init,
                                            const std::vector<PhantomCase>& train,
                                            const std::vector<PhantomCase>& val,
                                            const PipelineConfig& cfg, bool use_shape_gate,
                                            double lambda_w, double lambda_p, uint64_t seed);

struct ExperimentGrid {
  std::vector<double> ratios;
  std::vector<AnnotationKind> schemes;
  std::vector<Ablation> ablations;

  bool operator==(const ExperimentGrid&) const = default;
};

/// One grid cell end to end.
ExperimentReport run_single(const PhantomDataset& data, const AnnotationScheme& scheme_base,
                            double ratio, AnnotationKind kind, Ablation ablation,
                            const PipelineConfig& cfg, uint64_t master_seed,
                            const std::string& config_fingerprint = "");

/// Full grid; cells sharing (ratio, scheme) reuse the identical
/// initialization (pure function of the shared seed), keeping runs paired.
std::vector<ExperimentReport> run_experiment(const PhantomDataset& data,
                                             const AnnotationScheme& scheme_base,
                                             const ExperimentGrid& grid,
                                             const PipelineConfig& cfg, uint64_t master_seed,
                                             const std::string& config_fingerprint = "");

}  // namespace vseg
