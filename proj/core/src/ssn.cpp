#include "vseg/ssn.hpp"

#include <algorithm>
#include <stdexcept>

#include "vseg/rng.hpp"

namespace vseg {

void SSNTrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("ssn epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("ssn batch_size must be >= 1");
  if (lr_start < 0 || lr_end < 0) throw std::invalid_argument("ssn learning rates must be >= 0");
  if (momentum < 0 || momentum >= 1) throw std::invalid_argument("ssn momentum must be in [0,1)");
}

namespace {

Tensor5<float> stack_batch(const std::vector<const VolumeImage*>& images,
                           const std::vector<int>& order, int first, int count) {
  const Dims3& d = images[order[first]]->dims;
  Tensor5<float> x = Tensor5<float>::zeros(count, 1, d[0], d[1], d[2]);
  for (int i = 0; i < count; ++i) {
    const VolumeImage& img = *images[order[first + i]];
    if (img.dims != d) throw std::invalid_argument("training batch has mixed volume dims");
    std::copy(img.data.begin(), img.data.end(), x.data.begin() + x.index(i, 0, 0, 0, 0));
  }
  return x;
}

/// One epoch over all cases in a seeded order; returns the mean batch loss.
double train_epoch(SSNModel& model, const std::vector<const VolumeImage*>& images,
                   const std::vector<WeightedLabels>& supervision, int batch_size, double lr,
                   double momentum, uint64_t epoch_seed) {
  const int n_cases = static_cast<int>(images.size());
  std::vector<int> order(n_cases);
  for (int i = 0; i < n_cases; ++i) order[i] = i;
  Rng rng(epoch_seed);
  for (int i = n_cases - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(order[i], order[j]);
  }

  double loss_sum = 0;
  int n_batches = 0;
  for (int first = 0; first < n_cases; first += batch_size) {
    int count = std::min(batch_size, n_cases - first);
    Tensor5<float> x = stack_batch(images, order, first, count);
    UNetCache<float> cache;
    Tensor5<float> logits = unet_forward(model.cfg, model.params, x, &cache);

    // Evaluate every (label, weight) term on the shared logits and combine
    // the gradients before one backward pass. All cases share the same term
    // structure (one weak term, or weak + pseudo with fixed weights).
    const std::size_t n_terms = supervision[order[first]].terms.size();
    for (int i = 1; i < count; ++i) {
      if (supervision[order[first + i]].terms.size() != n_terms) {
        throw std::invalid_argument("training cases disagree on supervision term count");
      }
    }
    Tensor5<float> grad = Tensor5<float>::zeros(logits.dims[0], 1, logits.dims[2], logits.dims[3],
                                                logits.dims[4]);
    double batch_loss = 0;
    for (std::size_t t = 0; t < n_terms; ++t) {
      std::vector<const TriLabelMask*> labels(count);
      const double w = supervision[order[first]].terms[t].second;
      for (int i = 0; i < count; ++i) {
        labels[i] = supervision[order[first + i]].terms[t].first;
      }
      if (w == 0.0) continue;
      WceResult<float> res = weighted_ce_loss(logits, labels);
      for (std::size_t k = 0; k < grad.data.size(); ++k) {
        grad.data[k] += static_cast<float>(w) * res.grad_logits.data[k];
      }
      batch_loss += w * res.loss;
    }
    model.params.zero_grads();
    unet_backward(model.cfg, model.params, cache, grad);
    sgd_step(model.params, lr, momentum);
    loss_sum += batch_loss;
    ++n_batches;
  }
  return n_batches > 0 ? loss_sum / n_batches : 0.0;
}

}  // namespace

SSNModel train_ssn(const std::vector<std::pair<VolumeImage, TriLabelMask>>& cases,
                   const UNetConfig& cfg, const SSNTrainConfig& tcfg) {
  if (cases.empty()) throw std::invalid_argument("train_ssn: empty dataset");
  cfg.validate();
  tcfg.validate();

  SSNModel model;
  model.cfg = cfg;
  model.params = init_unet_parameters<float>(cfg, mix_seed(tcfg.seed, 0x55A));

  std::vector<const VolumeImage*> images;
  std::vector<WeightedLabels> supervision;
  for (const auto& [image, label] : cases) {
    image.validate();
    label.validate();
    if (image.dims != label.dims) throw std::invalid_argument("train_ssn: case dims mismatch");
    images.push_back(&image);
    supervision.push_back(WeightedLabels{{{&label, 1.0}}});
  }

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double lr = poly_lr(epoch, tcfg.epochs, tcfg.lr_start, tcfg.lr_end);
    double loss = train_epoch(model, images, supervision, tcfg.batch_size, lr, tcfg.momentum,
                              mix_seed(tcfg.seed, 0xE70C + static_cast<uint64_t>(epoch)));
    model.training_history.push_back(loss);
  }
  return model;
}

void train_ssn_terms(SSNModel& model, const std::vector<const VolumeImage*>& images,
                     const std::vector<WeightedLabels>& supervision, int epochs, double lr,
                     double momentum, int batch_size, uint64_t seed) {
  if (images.empty()) throw std::invalid_argument("train_ssn_terms: empty dataset");
  if (images.size() != supervision.size()) {
    throw std::invalid_argument("train_ssn_terms: one supervision entry per image required");
  }
  if (epochs < 0) throw std::invalid_argument("train_ssn_terms: epochs must be >= 0");
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double loss = train_epoch(model, images, supervision, batch_size, lr, momentum,
                              mix_seed(seed, 0xE70C + static_cast<uint64_t>(epoch)));
    model.training_history.push_back(loss);
  }
}

std::pair<ProbabilityVolume, BinaryMask> predict_ssn(const SSNModel& model,
                                                     const VolumeImage& image) {
  image.validate();
  Tensor5<float> x = Tensor5<float>::zeros(1, 1, image.dims[0], image.dims[1], image.dims[2]);
  std::copy(image.data.begin(), image.data.end(), x.data.begin());
  Tensor5<float> logits = unet_forward(model.cfg, model.params, x);
  ProbabilityVolume p = probabilities_from_logits(logits, 0, image.dims, image.spacing);
  return {p, threshold_above(p, 0.5f)};
}

}  // namespace vseg
