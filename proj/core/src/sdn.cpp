#include "vseg/sdn.hpp"

#include <algorithm>
#include <stdexcept>

#include "vseg/error.hpp"
#include "vseg/rng.hpp"

namespace vseg {

void NoiseAugConfig::validate() const {
  auto check_range = [](const std::array<int, 2>& r, const char* what) {
    if (r[0] < 1 || r[1] < r[0]) {
      throw std::invalid_argument(std::string(what) + " range is empty");
    }
  };
  check_range(closing_iters, "closing_iters");
  check_range(dilation_iters, "dilation_iters");
  check_range(extension_slices, "extension_slices");
  if (spatial_prob < 0 || spatial_prob > 1) {
    throw std::invalid_argument("spatial_prob must be in [0,1]");
  }
  if (op_prob < 0 || op_prob > 1) throw std::invalid_argument("op_prob must be in [0,1]");
  if (!(scale_min > 0) || scale_max < scale_min) {
    throw std::invalid_argument("scale range is empty or non-positive");
  }
  if (rotation_deg < 0) throw std::invalid_argument("rotation_deg must be >= 0");
  if (translation_voxels < 0) throw std::invalid_argument("translation_voxels must be >= 0");
}

double mask_confidence(const ProbabilityVolume& p) {
  double sum = 0;
  std::size_t n = 0;
  for (float v : p.data) {
    if (v > 0.5f) {
      sum += v;
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

ShapeTemplate select_template(const std::vector<Prediction>& predictions, int rank) {
  if (rank < 1) throw std::invalid_argument("select_template: rank must be >= 1");
  struct Entry {
    double confidence;
    int case_id;
    const Prediction* pred;
  };
  std::vector<Entry> entries;
  for (const Prediction& pred : predictions) {
    if (pred.m.empty_foreground()) continue;
    entries.push_back({mask_confidence(pred.p), pred.case_id, &pred});
  }
  if (entries.empty()) {
    throw NoTemplateError("select_template: every candidate mask is empty");
  }
  if (rank > static_cast<int>(entries.size())) {
    throw std::invalid_argument("select_template: rank exceeds non-empty prediction count");
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.case_id < b.case_id;
  });
  const Entry& e = entries[rank - 1];
  return ShapeTemplate{e.pred->m, e.case_id, e.confidence};
}

namespace {

// Boundary-seeded blob: dilate a single boundary voxel and union it in.
void apply_dilation_noise(BinaryMask& input, int iterations, bool planar, Rng& rng) {
  BinaryMask eroded = morph(input, MorphOp::kErode, 1, 6);
  std::vector<std::size_t> boundary;
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    if (input.data[i] && !eroded.data[i]) boundary.push_back(i);
  }
  if (boundary.empty()) return;
  std::size_t pick = boundary[rng.uniform_int(0, static_cast<int64_t>(boundary.size()) - 1)];
  BinaryMask seed_mask = BinaryMask::zeros(input.dims, input.spacing);
  seed_mask.data[pick] = 1;
  BinaryMask blob = morph(seed_mask, MorphOp::kDilate, iterations, 6, planar);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    if (blob.data[i]) input.data[i] = 1;
  }
}

void apply_extension_noise(BinaryMask& input, int slices, bool at_end) {
  int z_first = -1, z_last = -1;
  for (int z = 0; z < input.dims[0]; ++z) {
    const uint8_t* row = input.data.data() + input.index(z, 0, 0);
    std::size_t n = static_cast<std::size_t>(input.dims[1]) * input.dims[2];
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (row[i]) {
        any = true;
        break;
      }
    }
    if (any) {
      if (z_first < 0) z_first = z;
      z_last = z;
    }
  }
  if (z_first < 0) return;
  std::size_t slice_px = static_cast<std::size_t>(input.dims[1]) * input.dims[2];
  if (at_end) {
    for (int i = 1; i <= slices; ++i) {
      int z = z_last + i;
      if (z >= input.dims[0]) break;
      for (std::size_t k = 0; k < slice_px; ++k) {
        input.data[input.index(z, 0, 0) + k] |= input.data[input.index(z_last, 0, 0) + k];
      }
    }
  } else {
    for (int i = 1; i <= slices; ++i) {
      int z = z_first - i;
      if (z < 0) break;
      for (std::size_t k = 0; k < slice_px; ++k) {
        input.data[input.index(z, 0, 0) + k] |= input.data[input.index(z_first, 0, 0) + k];
      }
    }
  }
}

Tensor5<float> mask_to_tensor(const BinaryMask& m) {
  Tensor5<float> x = Tensor5<float>::zeros(1, 1, m.dims[0], m.dims[1], m.dims[2]);
  for (std::size_t i = 0; i < m.data.size(); ++i) x.data[i] = static_cast<float>(m.data[i]);
  return x;
}

SDNModel train_sdn_impl(const std::vector<ShapeTemplate>& templates, const UNetConfig& cfg,
                        const NoiseAugConfig& aug, int epochs, double lr, double momentum) {
  if (templates.empty()) throw std::invalid_argument("train_sdn: no template");
  for (const auto& t : templates) {
    if (t.mask.empty_foreground()) throw std::invalid_argument("train_sdn: empty template mask");
  }
  cfg.validate();
  aug.validate();
  if (epochs < 0) throw std::invalid_argument("train_sdn: epochs must be >= 0");

  SDNModel model;
  model.cfg = cfg;
  model.params = init_unet_parameters<float>(cfg, mix_seed(aug.seed, 0x5D11));

  for (int step = 0; step < epochs; ++step) {
    const ShapeTemplate& tmpl = templates[step % templates.size()];
    AugmentedPair pair = augment_shape(tmpl, aug, mix_seed(aug.seed, 0xA000 + static_cast<uint64_t>(step)));
    Tensor5<float> x = mask_to_tensor(pair.input);
    UNetCache<float> cache;
    Tensor5<float> logits = unet_forward(model.cfg, model.params, x, &cache);
    std::vector<const BinaryMask*> targets{&pair.target};
    WceResult<float> res = plain_ce_loss(logits, targets);
    model.params.zero_grads();
    unet_backward(model.cfg, model.params, cache, res.grad_logits);
    sgd_step(model.params, lr, momentum);
  }
  model.frozen = true;
  return model;
}

}  // namespace

AugmentedPair augment_shape(const ShapeTemplate& tmpl, const NoiseAugConfig& cfg,
                            uint64_t draw_seed) {
  cfg.validate();
  if (tmpl.mask.empty_foreground()) throw std::invalid_argument("augment_shape: empty template");
  Rng rng(draw_seed);

  AugmentedPair out;
  out.target = tmpl.mask;
  if (rng.bernoulli(cfg.spatial_prob)) {
    SpatialTransformParams params;
    for (int a = 0; a < 3; ++a) {
      params.rotation_deg[a] = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
    }
    params.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    for (int a = 0; a < 3; ++a) {
      params.translation[a] =
          static_cast<double>(rng.uniform_int(-cfg.translation_voxels, cfg.translation_voxels));
    }
    BinaryMask moved = spatial_transform(tmpl.mask, params);
    if (!moved.empty_foreground()) {  // keep the pair valid if the shape left the volume
      out.target = std::move(moved);
      out.transformed = true;
      out.transform = params;
    }
  }

  out.input = out.target;
  if (cfg.enable_closing && rng.bernoulli(cfg.op_prob)) {
    int iters = static_cast<int>(rng.uniform_int(cfg.closing_iters[0], cfg.closing_iters[1]));
    out.input = morph(out.input, MorphOp::kClose, iters, 6);
  }
  if (cfg.enable_dilation && rng.bernoulli(cfg.op_prob)) {
    int iters = static_cast<int>(rng.uniform_int(cfg.dilation_iters[0], cfg.dilation_iters[1]));
    apply_dilation_noise(out.input, iters, cfg.dilation_planar, rng);
  }
  if (cfg.enable_extension && rng.bernoulli(cfg.op_prob)) {
    int slices = static_cast<int>(rng.uniform_int(cfg.extension_slices[0], cfg.extension_slices[1]));
    bool at_end = rng.bernoulli(0.5);
    apply_extension_noise(out.input, slices, at_end);
  }
  return out;
}

SDNModel train_sdn(const ShapeTemplate& tmpl, const UNetConfig& cfg, const NoiseAugConfig& aug,
                   int epochs, double lr, double momentum) {
  return train_sdn_impl({tmpl}, cfg, aug, epochs, lr, momentum);
}

SDNModel train_sdn_multi(const std::vector<ShapeTemplate>& templates, const UNetConfig& cfg,
                         const NoiseAugConfig& aug, int epochs, double lr, double momentum) {
  return train_sdn_impl(templates, cfg, aug, epochs, lr, momentum);
}

std::pair<ProbabilityVolume, BinaryMask> denoise(const SDNModel& model, const BinaryMask& m) {
  m.validate();
  Tensor5<float> x = mask_to_tensor(m);
  Tensor5<float> logits = unet_forward(model.cfg, model.params, x);
  ProbabilityVolume p = probabilities_from_logits(logits, 0, m.dims, m.spacing);
  return {p, threshold_above(p, 0.5f)};
}

}  // namespace vseg
