#include "vseg/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vseg/config.hpp"
#include "vseg/error.hpp"
#include "vseg/io.hpp"
#include "vseg/phantom.hpp"
#include "vseg/pipeline.hpp"
#include "vseg/report.hpp"
#include "vseg/rng.hpp"

namespace vseg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string case_file(const char* prefix, int case_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%04d.vvol", prefix, case_id);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct LoadedConfig {
  RunConfig cfg;
  std::string canonical;  // rendered form, used as the run fingerprint
};

LoadedConfig load_config(const std::string& path, std::optional<uint64_t> seed_override) {
  LoadedConfig out;
  out.cfg = load_run_config(path);
  if (seed_override) out.cfg.seed = *seed_override;
  out.canonical = render_run_config(out.cfg);
  return out;
}

void cmd_gen_data(const LoadedConfig& lc, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const RunConfig& cfg = lc.cfg;
  PhantomDataset data =
      generate_dataset(cfg.phantom, cfg.n_train, cfg.n_val, cfg.n_test, cfg.seed);

  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["phantom"] = json::parse(render_run_config(cfg))["phantom"];
  json cases = json::array();
  auto emit_split = [&](const std::vector<PhantomCase>& split, const char* name) {
    for (const PhantomCase& c : split) {
      write_volume(out_dir / case_file("img", c.case_id), c.image);
      write_volume(out_dir / case_file("gt", c.case_id), c.gt);
      cases.push_back({{"id", c.case_id},
                       {"split", name},
                       {"seed", c.seed},
                       {"image", case_file("img", c.case_id)},
                       {"gt", case_file("gt", c.case_id)}});
    }
  };
  emit_split(data.train, "train");
  emit_split(data.val, "val");
  emit_split(data.test, "test");
  manifest["cases"] = cases;
  write_text(out_dir / "dataset.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << cases.size() << " cases to " << out_dir.string() << "\n";
}

PhantomDataset read_dataset(const fs::path& data_dir) {
  json manifest = json::parse(read_text(data_dir / "dataset.json"));
  PhantomDataset data;
  for (const auto& entry : manifest.at("cases")) {
    PhantomCase c;
    c.case_id = entry.at("id").get<int>();
    c.seed = entry.at("seed").get<uint64_t>();
    c.image = read_volume_image(data_dir / entry.at("image").get<std::string>());
    c.gt = read_binary_mask(data_dir / entry.at("gt").get<std::string>());
    std::string split = entry.at("split").get<std::string>();
    if (split == "train") data.train.push_back(std::move(c));
    else if (split == "val") data.val.push_back(std::move(c));
    else if (split == "test") data.test.push_back(std::move(c));
    else throw FormatError("dataset.json: unknown split " + split);
  }
  if (data.train.empty()) throw FormatError("dataset.json: no training cases");
  return data;
}

void cmd_make_labels(const LoadedConfig& lc, const fs::path& data_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  PhantomDataset data = read_dataset(data_dir);
  std::vector<TriLabelMask> weak = make_weak_labels(data.train, lc.cfg.scheme, lc.cfg.seed);
  json meta;
  meta["seed"] = lc.cfg.seed;
  meta["scheme"] = json::parse(lc.canonical)["scheme"];
  json files = json::array();
  for (std::size_t i = 0; i < weak.size(); ++i) {
    int id = data.train[i].case_id;
    write_volume(out_dir / case_file("weak", id), weak[i]);
    files.push_back({{"id", id}, {"file", case_file("weak", id)}});
  }
  meta["labels"] = files;
  write_text(out_dir / "labels.json", meta.dump(2) + "\n");
  std::cout << "wrote " << weak.size() << " weak labels to " << out_dir.string() << "\n";
}

std::vector<TriLabelMask> read_labels(const fs::path& labels_dir,
                                      const std::vector<PhantomCase>& train) {
  json meta = json::parse(read_text(labels_dir / "labels.json"));
  std::vector<TriLabelMask> weak;
  for (const PhantomCase& c : train) {
    bool found = false;
    for (const auto& entry : meta.at("labels")) {
      if (entry.at("id").get<int>() == c.case_id) {
        weak.push_back(read_tri_label_mask(labels_dir / entry.at("file").get<std::string>()));
        found = true;
        break;
      }
    }
    if (!found) {
      throw FormatError("labels.json: no label for case " + std::to_string(c.case_id));
    }
  }
  return weak;
}

void cmd_train_init(const LoadedConfig& lc, const fs::path& data_dir, const fs::path& labels_dir,
                    const fs::path& out_dir) {
  fs::create_directories(out_dir);
  PhantomDataset data = read_dataset(data_dir);
  std::vector<TriLabelMask> weak = read_labels(labels_dir, data.train);
  InitResult init = run_initialization_with_labels(data.train, std::move(weak), lc.cfg.pipeline,
                                                   lc.cfg.seed, /*with_sdn=*/false);
  save_checkpoint(out_dir / "ssn.ckpt", init.ssn);
  std::cout << "trained initial model (" << init.ssn.training_history.size() << " epochs), final loss "
            << (init.ssn.training_history.empty() ? 0.0 : init.ssn.training_history.back())
            << "\nwrote " << (out_dir / "ssn.ckpt").string() << "\n";
}

void cmd_train_sdn(const LoadedConfig& lc, const fs::path& data_dir, const fs::path& labels_dir,
                   const fs::path& ssn_path, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  PhantomDataset data = read_dataset(data_dir);
  std::vector<TriLabelMask> weak = read_labels(labels_dir, data.train);
  InitResult init =
      make_context(load_ssn_checkpoint(ssn_path), data.train, std::move(weak), lc.cfg.pipeline);
  attach_sdn(init, lc.cfg.pipeline, lc.cfg.seed);
  save_checkpoint(out_dir / "sdn.ckpt", init.sdn);
  std::cout << "trained shape denoiser (frozen), wrote " << (out_dir / "sdn.ckpt").string() << "\n";
}

ExperimentReport report_shell(const LoadedConfig& lc, Ablation ablation) {
  ExperimentReport rep;
  rep.ablation = ablation_name(ablation);
  rep.scheme = annotation_kind_name(lc.cfg.scheme.kind);
  rep.ratio = lc.cfg.scheme.ratio;
  rep.master_seed = lc.cfg.seed;
  rep.fingerprint = lc.canonical + "|ratio=" + std::to_string(rep.ratio) + "|scheme=" + rep.scheme +
                    "|ablation=" + rep.ablation + "|seed=" + std::to_string(lc.cfg.seed);
  return rep;
}

void fill_metrics(const InitResult& init, const PhantomDataset& data, ExperimentReport& rep) {
  auto fill = [&](const std::vector<PhantomCase>& cases, std::vector<CaseMetrics>& out,
                  double& mean_ssn, double& mean_sdn) {
    out.clear();
    if (cases.empty()) {
      mean_ssn = -1.0;
      mean_sdn = -1.0;
      return;
    }
    double sum_ssn = 0, sum_sdn = 0;
    for (const PhantomCase& c : cases) {
      out.push_back(evaluate_case(init, c));
      sum_ssn += out.back().dice_ssn;
      sum_sdn += out.back().dice_sdn;
    }
    mean_ssn = sum_ssn / cases.size();
    mean_sdn = init.has_sdn ? sum_sdn / cases.size() : -1.0;
  };
  fill(data.val, rep.val_cases, rep.val_mean_dice_ssn, rep.val_mean_dice_sdn);
  fill(data.test, rep.test_cases, rep.test_mean_dice_ssn, rep.test_mean_dice_sdn);
}

void cmd_iterate(const LoadedConfig& lc, const fs::path& data_dir, const fs::path& labels_dir,
                 const fs::path& ssn_path, const fs::path& sdn_path, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  PhantomDataset data = read_dataset(data_dir);
  std::vector<TriLabelMask> weak = read_labels(labels_dir, data.train);
  InitResult init =
      make_context(load_ssn_checkpoint(ssn_path), data.train, std::move(weak), lc.cfg.pipeline);
  init.sdn = load_sdn_checkpoint(sdn_path);
  init.has_sdn = true;

  ExperimentReport rep = report_shell(lc, Ablation::kFull);
  rep.init_loss_curve = init.ssn.training_history;
  rep.iterations =
      run_iterations(init, data.train, data.val, lc.cfg.pipeline, /*use_shape_gate=*/true,
                     lc.cfg.pipeline.iter.lambda_w, lc.cfg.pipeline.iter.lambda_p,
                     mix_seed(lc.cfg.seed, 0x17E0));
  fill_metrics(init, data, rep);
  save_checkpoint(out_dir / "ssn_final.ckpt", init.ssn);
  save_report(out_dir / "iterate.report.json", rep);
  std::cout << "ran " << rep.iterations.size() << " iterations, val mean dice "
            << rep.val_mean_dice_ssn << "\nwrote " << (out_dir / "ssn_final.ckpt").string()
            << " and iterate.report.json\n";
}

void cmd_evaluate(const LoadedConfig& lc, const fs::path& data_dir, const fs::path& labels_dir,
                  const fs::path& ssn_path, const std::string& sdn_path, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  PhantomDataset data = read_dataset(data_dir);
  std::vector<TriLabelMask> weak = read_labels(labels_dir, data.train);
  InitResult init =
      make_context(load_ssn_checkpoint(ssn_path), data.train, std::move(weak), lc.cfg.pipeline);
  if (!sdn_path.empty()) {
    init.sdn = load_sdn_checkpoint(sdn_path);
    init.has_sdn = true;
  }
  ExperimentReport rep = report_shell(lc, Ablation::kFull);
  fill_metrics(init, data, rep);
  save_report(out_dir / "evaluate.report.json", rep);
  std::cout << render_reports_text({rep});
}

void cmd_experiment(const LoadedConfig& lc, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const RunConfig& cfg = lc.cfg;
  PhantomDataset data =
      generate_dataset(cfg.phantom, cfg.n_train, cfg.n_val, cfg.n_test, cfg.seed);
  std::vector<ExperimentReport> reports =
      run_experiment(data, cfg.scheme, cfg.grid, cfg.pipeline, cfg.seed, lc.canonical);
  for (const ExperimentReport& rep : reports) {
    char name[128];
    std::snprintf(name, sizeof(name), "cell_%s_%s_%03d.report.json", rep.ablation.c_str(),
                  rep.scheme.c_str(), static_cast<int>(rep.ratio * 100 + 0.5));
    save_report(out_dir / name, rep);
  }
  write_text(out_dir / "summary.txt", render_reports_text(reports));
  write_text(out_dir / "summary.csv", render_reports_csv(reports));
  std::cout << render_reports_text(reports);
  std::cout << "wrote " << reports.size() << " reports to " << out_dir.string() << "\n";
}

void cmd_report(const fs::path& in_dir, const fs::path& out_dir) {
  std::vector<ExperimentReport> reports;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (entry.path().string().ends_with(".report.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) reports.push_back(load_report(f));
  if (reports.empty()) throw std::invalid_argument("report: no *.report.json files in " + in_dir.string());
  fs::create_directories(out_dir);
  write_text(out_dir / "summary.txt", render_reports_text(reports));
  write_text(out_dir / "summary.csv", render_reports_csv(reports));
  std::cout << render_reports_text(reports);
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"weakly supervised volumetric segmentation toolchain"};
  app.require_subcommand(1);

  std::string config_path, data_dir, labels_dir, out_dir = ".", ssn_path, sdn_path, in_dir;
  std::optional<uint64_t> seed_override;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config) {
      cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
      cmd->add_option("--seed", seed_override, "override the configured master seed");
    }
    cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen);

  CLI::App* labels = app.add_subcommand("make-labels", "synthesize weak annotations");
  add_common(labels);
  labels->add_option("--data", data_dir, "dataset directory (from gen-data)")->required();

  CLI::App* init = app.add_subcommand("train-init", "train the segmentation model on weak labels");
  add_common(init);
  init->add_option("--data", data_dir, "dataset directory")->required();
  init->add_option("--labels", labels_dir, "weak label directory")->required();

  CLI::App* sdn = app.add_subcommand("train-sdn", "train the frozen shape denoiser");
  add_common(sdn);
  sdn->add_option("--data", data_dir, "dataset directory")->required();
  sdn->add_option("--labels", labels_dir, "weak label directory")->required();
  sdn->add_option("--ssn", ssn_path, "initial model checkpoint")->required();

  CLI::App* iter = app.add_subcommand("iterate", "run iterative pseudo-label refinement");
  add_common(iter);
  iter->add_option("--data", data_dir, "dataset directory")->required();
  iter->add_option("--labels", labels_dir, "weak label directory")->required();
  iter->add_option("--ssn", ssn_path, "initial model checkpoint")->required();
  iter->add_option("--sdn", sdn_path, "denoiser checkpoint")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on val/test splits");
  add_common(eval);
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--labels", labels_dir, "weak label directory (defines the crop)")->required();
  eval->add_option("--ssn", ssn_path, "model checkpoint")->required();
  eval->add_option("--sdn", sdn_path, "optional denoiser checkpoint");

  CLI::App* exp = app.add_subcommand("experiment", "run the full ablation grid");
  add_common(exp);

  CLI::App* rep = app.add_subcommand("report", "render report files into comparison tables");
  rep->add_option("--in", in_dir, "directory with *.report.json files")->required();
  rep->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the usage diagnostic
    return 2;
  }

  try {
    if (gen->parsed()) {
      cmd_gen_data(load_config(config_path, seed_override), out_dir);
    } else if (labels->parsed()) {
      cmd_make_labels(load_config(config_path, seed_override), data_dir, out_dir);
    } else if (init->parsed()) {
      cmd_train_init(load_config(config_path, seed_override), data_dir, labels_dir, out_dir);
    } else if (sdn->parsed()) {
      cmd_train_sdn(load_config(config_path, seed_override), data_dir, labels_dir, ssn_path,
                    out_dir);
    } else if (iter->parsed()) {
      cmd_iterate(load_config(config_path, seed_override), data_dir, labels_dir, ssn_path,
                  sdn_path, out_dir);
    } else if (eval->parsed()) {
      cmd_evaluate(load_config(config_path, seed_override), data_dir, labels_dir, ssn_path,
                   sdn_path, out_dir);
    } else if (exp->parsed()) {
      cmd_experiment(load_config(config_path, seed_override), out_dir);
    } else if (rep->parsed()) {
      cmd_report(in_dir, out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vseg
