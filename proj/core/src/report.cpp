#include "vseg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "vseg/error.hpp"

namespace vseg {

using nlohmann::json;

namespace {

json metrics_to_json(const std::vector<CaseMetrics>& cases) {
  json arr = json::array();
  for (const CaseMetrics& c : cases) {
    arr.push_back({{"case_id", c.case_id}, {"dice_ssn", c.dice_ssn}, {"dice_sdn", c.dice_sdn}});
  }
  return arr;
}

std::vector<CaseMetrics> metrics_from_json(const json& arr) {
  std::vector<CaseMetrics> out;
  for (const auto& j : arr) {
    out.push_back({j.at("case_id").get<int>(), j.at("dice_ssn").get<double>(),
                   j.at("dice_sdn").get<double>()});
  }
  return out;
}

}  // namespace

std::string report_to_json(const ExperimentReport& r) {
  json j;
  j["ablation"] = r.ablation;
  j["scheme"] = r.scheme;
  j["ratio"] = r.ratio;
  j["master_seed"] = r.master_seed;
  j["fingerprint"] = r.fingerprint;
  j["init_loss_curve"] = r.init_loss_curve;
  json iters = json::array();
  for (const IterationReport& it : r.iterations) {
    iters.push_back({{"iteration", it.iteration},
                     {"mean_loss", it.mean_loss},
                     {"train_mean_dice_ssn", it.train_mean_dice_ssn},
                     {"val_mean_dice_ssn", it.val_mean_dice_ssn}});
  }
  j["iterations"] = iters;
  j["val_cases"] = metrics_to_json(r.val_cases);
  j["test_cases"] = metrics_to_json(r.test_cases);
  j["val_mean_dice_ssn"] = r.val_mean_dice_ssn;
  j["val_mean_dice_sdn"] = r.val_mean_dice_sdn;
  j["test_mean_dice_ssn"] = r.test_mean_dice_ssn;
  j["test_mean_dice_sdn"] = r.test_mean_dice_sdn;
  return j.dump(2) + "\n";
}

ExperimentReport report_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: not valid JSON: ") + e.what());
  }
  try {
    ExperimentReport r;
    r.ablation = j.at("ablation").get<std::string>();
    r.scheme = j.at("scheme").get<std::string>();
    r.ratio = j.at("ratio").get<double>();
    r.master_seed = j.at("master_seed").get<uint64_t>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.init_loss_curve = j.at("init_loss_curve").get<std::vector<double>>();
    for (const auto& it : j.at("iterations")) {
      r.iterations.push_back({it.at("iteration").get<int>(), it.at("mean_loss").get<double>(),
                              it.at("train_mean_dice_ssn").get<double>(),
                              it.at("val_mean_dice_ssn").get<double>()});
    }
    r.val_cases = metrics_from_json(j.at("val_cases"));
    r.test_cases = metrics_from_json(j.at("test_cases"));
    r.val_mean_dice_ssn = j.at("val_mean_dice_ssn").get<double>();
    r.val_mean_dice_sdn = j.at("val_mean_dice_sdn").get<double>();
    r.test_mean_dice_ssn = j.at("test_mean_dice_ssn").get<double>();
    r.test_mean_dice_sdn = j.at("test_mean_dice_sdn").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const ExperimentReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << report_to_json(report);
}

ExperimentReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return report_from_json(text);
}

namespace {

std::string format_dice(double v) {
  if (v < 0) return "--";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string format_ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g%%", v * 100.0);
  return buf;
}

}  // namespace

std::string render_reports_text(const std::vector<ExperimentReport>& reports) {
  std::set<double> ratios;
  std::map<std::pair<std::string, std::string>, std::map<double, double>> rows;
  for (const ExperimentReport& r : reports) {
    ratios.insert(r.ratio);
    rows[{r.ablation, r.scheme}][r.ratio] = r.val_mean_dice_ssn;
  }
  std::vector<double> cols(ratios.rbegin(), ratios.rend());  // densest first

  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %-18s", "method", "annotation");
  out += buf;
  for (double c : cols) {
    std::snprintf(buf, sizeof(buf), " %8s", format_ratio(c).c_str());
    out += buf;
  }
  out += "\n";
  for (const auto& [key, by_ratio] : rows) {
    std::snprintf(buf, sizeof(buf), "%-16s %-18s", key.first.c_str(), key.second.c_str());
    out += buf;
    for (double c : cols) {
      auto it = by_ratio.find(c);
      std::snprintf(buf, sizeof(buf), " %8s", it == by_ratio.end() ? "--" : format_dice(it->second).c_str());
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string render_reports_csv(const std::vector<ExperimentReport>& reports) {
  std::string out =
      "ablation,scheme,ratio,val_mean_dice_ssn,val_mean_dice_sdn,test_mean_dice_ssn,test_mean_dice_sdn\n";
  std::vector<const ExperimentReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const ExperimentReport* a, const ExperimentReport* b) {
    if (a->ablation != b->ablation) return a->ablation < b->ablation;
    if (a->scheme != b->scheme) return a->scheme < b->scheme;
    return a->ratio > b->ratio;
  });
  char buf[256];
  for (const ExperimentReport* r : sorted) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%g,%.6f,%.6f,%.6f,%.6f\n", r->ablation.c_str(),
                  r->scheme.c_str(), r->ratio, r->val_mean_dice_ssn, r->val_mean_dice_sdn,
                  r->test_mean_dice_ssn, r->test_mean_dice_sdn);
    out += buf;
  }
  return out;
}

}  // namespace vseg
