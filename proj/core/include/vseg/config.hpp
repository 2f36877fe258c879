#pragma once

#include <filesystem>
#include <string>

#include "vseg/phantom.hpp"
#include "vseg/pipeline.hpp"

namespace vseg {

/// Every tunable of the toolchain as one document. Parsing is strict: unknown
/// keys are rejected, absent keys take the documented defaults, and
/// parse(render(c)) == c.
struct RunConfig {
  uint64_t seed = 12345;
  PhantomSpec phantom;
  int n_train = 8;
  int n_val = 4;
  int n_test = 0;
  AnnotationScheme scheme;
  PipelineConfig pipeline;
  ExperimentGrid grid{{0.3}, {AnnotationKind::kHybrid}, {Ablation::kFull, Ablation::kBaseline}};

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_run_config(const std::string& json_text);
std::string render_run_config(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

const char* phantom_family_name(PhantomFamily f);
PhantomFamily phantom_family_from_name(const std::string& name);

}  // namespace vseg
