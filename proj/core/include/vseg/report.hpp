#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vseg/pipeline.hpp"

namespace vseg {

std::string report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const std::string& json_text);

void save_report(const std::filesystem::path& path, const ExperimentReport& report);
ExperimentReport load_report(const std::filesystem::path& path);

/// Comparison matrix: one row per (ablation, scheme), one column per ratio,
/// mean validation dice in each cell.
std::string render_reports_text(const std::vector<ExperimentReport>& reports);
std::string render_reports_csv(const std::vector<ExperimentReport>& reports);

}  // namespace vseg
