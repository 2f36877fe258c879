#include "vseg/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace vseg {

using nlohmann::json;

const char* phantom_family_name(PhantomFamily f) {
  switch (f) {
    case PhantomFamily::kTube: return "tube";
    case PhantomFamily::kBifurcatedTube: return "bifurcated_tube";
    case PhantomFamily::kEllipsoid: return "ellipsoid";
    case PhantomFamily::kLobedEllipsoid: return "lobed_ellipsoid";
  }
  return "?";
}

PhantomFamily phantom_family_from_name(const std::string& name) {
  if (name == "tube") return PhantomFamily::kTube;
  if (name == "bifurcated_tube") return PhantomFamily::kBifurcatedTube;
  if (name == "ellipsoid") return PhantomFamily::kEllipsoid;
  if (name == "lobed_ellipsoid") return PhantomFamily::kLobedEllipsoid;
  throw std::invalid_argument("unknown phantom family: " + name);
}

namespace {

/// Field-by-field reader that rejects keys it was not told about.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: " + path_ + " must be an object");
  }

  ~StrictObject() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!known_.count(key)) {
        throw std::invalid_argument("config: unknown key " + path_ + "." + key);
      }
    }
  }

  bool has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const std::string& key, T& target) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      target = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: bad value for " + path_ + "." + key);
    }
  }

  const json* child(const std::string& key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

template <typename T, std::size_t N>
void get_array(StrictObject& o, const std::string& key, std::array<T, N>& target) {
  if (!o.has(key)) return;
  std::vector<T> v;
  o.get(key, v);
  if (v.size() != N) {
    throw std::invalid_argument("config: " + o.path() + "." + key + " needs " + std::to_string(N) +
                                " entries");
  }
  for (std::size_t i = 0; i < N; ++i) target[i] = v[i];
}

void parse_phantom(const json& j, PhantomSpec& spec, const std::string& path) {
  StrictObject o(j, path);
  std::string family = phantom_family_name(spec.family);
  o.get("family", family);
  spec.family = phantom_family_from_name(family);
  get_array(o, "dims", spec.dims);
  get_array(o, "spacing", spec.spacing);
  o.get("size_min", spec.size_min);
  o.get("size_max", spec.size_max);
  o.get("fg_mean", spec.fg_mean);
  o.get("fg_jitter", spec.fg_jitter);
  o.get("bg_mean", spec.bg_mean);
  o.get("bg_jitter", spec.bg_jitter);
  o.get("neighbor", spec.neighbor);
  o.get("noise_sigma", spec.noise_sigma);
}

json render_phantom(const PhantomSpec& spec) {
  json j;
  j["family"] = phantom_family_name(spec.family);
  j["dims"] = spec.dims;
  j["spacing"] = spec.spacing;
  j["size_min"] = spec.size_min;
  j["size_max"] = spec.size_max;
  j["fg_mean"] = spec.fg_mean;
  j["fg_jitter"] = spec.fg_jitter;
  j["bg_mean"] = spec.bg_mean;
  j["bg_jitter"] = spec.bg_jitter;
  j["neighbor"] = spec.neighbor;
  j["noise_sigma"] = spec.noise_sigma;
  return j;
}

void parse_scheme(const json& j, AnnotationScheme& s, const std::string& path) {
  StrictObject o(j, path);
  std::string kind = annotation_kind_name(s.kind);
  o.get("kind", kind);
  s.kind = annotation_kind_from_name(kind);
  o.get("ratio", s.ratio);
  o.get("loose_offset_min", s.loose_offset_min);
  o.get("loose_offset_max", s.loose_offset_max);
  o.get("dilation_min", s.dilation_min);
  o.get("dilation_max", s.dilation_max);
  o.get("scribble_width", s.scribble_width);
  o.get("endpoint_margin", s.endpoint_margin);
}

json render_scheme(const AnnotationScheme& s) {
  json j;
  j["kind"] = annotation_kind_name(s.kind);
  j["ratio"] = s.ratio;
  j["loose_offset_min"] = s.loose_offset_min;
  j["loose_offset_max"] = s.loose_offset_max;
  j["dilation_min"] = s.dilation_min;
  j["dilation_max"] = s.dilation_max;
  j["scribble_width"] = s.scribble_width;
  j["endpoint_margin"] = s.endpoint_margin;
  return j;
}

void parse_net(const json& j, UNetConfig& n, const std::string& path) {
  StrictObject o(j, path);
  o.get("levels", n.levels);
  o.get("base_channels", n.base_channels);
  if (o.has("kernel_sizes")) {
    std::vector<std::vector<int>> ks;
    o.get("kernel_sizes", ks);
    n.kernel_sizes.clear();
    for (const auto& k : ks) {
      if (k.size() != 3) throw std::invalid_argument("config: kernel_sizes entries need 3 values");
      n.kernel_sizes.push_back({k[0], k[1], k[2]});
    }
  } else if (static_cast<int>(n.kernel_sizes.size()) != n.levels) {
    n.kernel_sizes.assign(n.levels, {3, 3, 3});
  }
  if (o.has("pooling_strides")) {
    std::vector<std::vector<int>> ss;
    o.get("pooling_strides", ss);
    n.pooling_strides.clear();
    for (const auto& s : ss) {
      if (s.size() != 3) throw std::invalid_argument("config: pooling_strides entries need 3 values");
      n.pooling_strides.push_back({s[0], s[1], s[2]});
    }
  } else if (static_cast<int>(n.pooling_strides.size()) != n.levels - 1) {
    n.pooling_strides.assign(n.levels - 1, {2, 2, 2});
  }
}

json render_net(const UNetConfig& n) {
  json j;
  j["levels"] = n.levels;
  j["base_channels"] = n.base_channels;
  j["kernel_sizes"] = n.kernel_sizes;
  j["pooling_strides"] = n.pooling_strides;
  return j;
}

void parse_aug(const json& j, NoiseAugConfig& a, const std::string& path) {
  StrictObject o(j, path);
  o.get("enable_closing", a.enable_closing);
  o.get("enable_dilation", a.enable_dilation);
  o.get("enable_extension", a.enable_extension);
  get_array(o, "closing_iters", a.closing_iters);
  get_array(o, "dilation_iters", a.dilation_iters);
  o.get("dilation_planar", a.dilation_planar);
  get_array(o, "extension_slices", a.extension_slices);
  o.get("spatial_prob", a.spatial_prob);
  o.get("op_prob", a.op_prob);
  o.get("rotation_deg", a.rotation_deg);
  o.get("scale_min", a.scale_min);
  o.get("scale_max", a.scale_max);
  o.get("translation_voxels", a.translation_voxels);
}

json render_aug(const NoiseAugConfig& a) {
  json j;
  j["enable_closing"] = a.enable_closing;
  j["enable_dilation"] = a.enable_dilation;
  j["enable_extension"] = a.enable_extension;
  j["closing_iters"] = a.closing_iters;
  j["dilation_iters"] = a.dilation_iters;
  j["dilation_planar"] = a.dilation_planar;
  j["extension_slices"] = a.extension_slices;
  j["spatial_prob"] = a.spatial_prob;
  j["op_prob"] = a.op_prob;
  j["rotation_deg"] = a.rotation_deg;
  j["scale_min"] = a.scale_min;
  j["scale_max"] = a.scale_max;
  j["translation_voxels"] = a.translation_voxels;
  return j;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  StrictObject root(j, "config");
  root.get("seed", cfg.seed);
  if (const json* p = root.child("phantom")) parse_phantom(*p, cfg.phantom, "phantom");
  if (const json* p = root.child("dataset")) {
    StrictObject o(*p, "dataset");
    o.get("n_train", cfg.n_train);
    o.get("n_val", cfg.n_val);
    o.get("n_test", cfg.n_test);
  }
  if (const json* p = root.child("scheme")) parse_scheme(*p, cfg.scheme, "scheme");
  if (const json* p = root.child("net")) parse_net(*p, cfg.pipeline.net, "net");
  if (const json* p = root.child("ssn_train")) {
    StrictObject o(*p, "ssn_train");
    o.get("epochs", cfg.pipeline.ssn_train.epochs);
    o.get("lr_start", cfg.pipeline.ssn_train.lr_start);
    o.get("lr_end", cfg.pipeline.ssn_train.lr_end);
    o.get("momentum", cfg.pipeline.ssn_train.momentum);
    o.get("batch_size", cfg.pipeline.ssn_train.batch_size);
  }
  if (const json* p = root.child("sdn")) {
    StrictObject o(*p, "sdn");
    o.get("epochs", cfg.pipeline.sdn_epochs);
    o.get("lr", cfg.pipeline.sdn_lr);
    o.get("momentum", cfg.pipeline.sdn_momentum);
    o.get("template_rank", cfg.pipeline.template_rank);
    if (const json* a = o.child("aug")) parse_aug(*a, cfg.pipeline.aug, "sdn.aug");
  }
  if (const json* p = root.child("iter")) {
    StrictObject o(*p, "iter");
    o.get("lambda_w", cfg.pipeline.iter.lambda_w);
    o.get("lambda_p", cfg.pipeline.iter.lambda_p);
    o.get("iter_epochs", cfg.pipeline.iter.iter_epochs);
    o.get("iter_lr", cfg.pipeline.iter.iter_lr);
    o.get("max_iterations", cfg.pipeline.iter.max_iterations);
  }
  if (const json* p = root.child("filter")) {
    StrictObject o(*p, "filter");
    o.get("fg_filter_fraction", cfg.pipeline.filter.fg_filter_fraction);
    o.get("bg_count_multiplier", cfg.pipeline.filter.bg_count_multiplier);
  }
  if (const json* p = root.child("crop")) {
    StrictObject o(*p, "crop");
    o.get("scale", cfg.pipeline.crop_scale);
    get_array(o, "target_spacing", cfg.pipeline.target_spacing);
  }
  if (const json* p = root.child("experiment")) {
    StrictObject o(*p, "experiment");
    o.get("ratios", cfg.grid.ratios);
    if (o.has("schemes")) {
      std::vector<std::string> names;
      o.get("schemes", names);
      cfg.grid.schemes.clear();
      for (const auto& n : names) cfg.grid.schemes.push_back(annotation_kind_from_name(n));
    }
    if (o.has("ablations")) {
      std::vector<std::string> names;
      o.get("ablations", names);
      cfg.grid.ablations.clear();
      for (const auto& n : names) cfg.grid.ablations.push_back(ablation_from_name(n));
    }
  }
  return cfg;
}

std::string render_run_config(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["phantom"] = render_phantom(cfg.phantom);
  j["dataset"] = {{"n_train", cfg.n_train}, {"n_val", cfg.n_val}, {"n_test", cfg.n_test}};
  j["scheme"] = render_scheme(cfg.scheme);
  j["net"] = render_net(cfg.pipeline.net);
  j["ssn_train"] = {{"epochs", cfg.pipeline.ssn_train.epochs},
                    {"lr_start", cfg.pipeline.ssn_train.lr_start},
                    {"lr_end", cfg.pipeline.ssn_train.lr_end},
                    {"momentum", cfg.pipeline.ssn_train.momentum},
                    {"batch_size", cfg.pipeline.ssn_train.batch_size}};
  j["sdn"] = {{"epochs", cfg.pipeline.sdn_epochs},
              {"lr", cfg.pipeline.sdn_lr},
              {"momentum", cfg.pipeline.sdn_momentum},
              {"template_rank", cfg.pipeline.template_rank},
              {"aug", render_aug(cfg.pipeline.aug)}};
  j["iter"] = {{"lambda_w", cfg.pipeline.iter.lambda_w},
               {"lambda_p", cfg.pipeline.iter.lambda_p},
               {"iter_epochs", cfg.pipeline.iter.iter_epochs},
               {"iter_lr", cfg.pipeline.iter.iter_lr},
               {"max_iterations", cfg.pipeline.iter.max_iterations}};
  j["filter"] = {{"fg_filter_fraction", cfg.pipeline.filter.fg_filter_fraction},
                 {"bg_count_multiplier", cfg.pipeline.filter.bg_count_multiplier}};
  j["crop"] = {{"scale", cfg.pipeline.crop_scale},
               {"target_spacing", cfg.pipeline.target_spacing}};
  json schemes = json::array(), ablations = json::array();
  for (AnnotationKind k : cfg.grid.schemes) schemes.push_back(annotation_kind_name(k));
  for (Ablation a : cfg.grid.ablations) ablations.push_back(ablation_name(a));
  j["experiment"] = {{"ratios", cfg.grid.ratios}, {"schemes", schemes}, {"ablations", ablations}};
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

}  // namespace vseg
