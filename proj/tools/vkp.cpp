// vkp: viewpoint and keypoint evaluation, fusion and synthetic data.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vkp/dataset_io.hpp"
#include "vkp/pipeline.hpp"
#include "vkp/synth.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

struct CommonOptions {
  std::string dataset;
  std::string preds;
  std::string report;
  std::string format = "table";
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_preds) {
  cmd->add_option("--dataset", o.dataset, "Dataset directory")->required();
  if (with_preds) {
    cmd->add_option("--preds", o.preds,
                    "Predictions: a directory holding predictions.jsonl / detections.jsonl, or one such file");
  }
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
}

void add_report(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--report", o.report, "Write the report here instead of stdout");
  cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"table", "json"}));
}

bool is_detections_file(const fs::path& p) {
  return p.filename().string().find("detections") != std::string::npos;
}

void check_detections(const vkp::Dataset& ds) {
  const auto kpc = ds.manifest.keypoints_per_class();
  for (const auto& d : ds.detections) {
    d.validate();
    if (d.class_index >= kpc.size()) {
      throw vkp::ValidationError("detection '" + d.id + "' has unknown class " + std::to_string(d.class_index));
    }
    for (const auto& h : d.keypoint_hypotheses) {
      if (h.id >= kpc[d.class_index]) {
        throw vkp::ValidationError("detection '" + d.id + "' has keypoint id " + std::to_string(h.id) +
                                   " beyond the class layout");
      }
    }
  }
}

// Loads the dataset and swaps in externally supplied predictions/detections.
vkp::Dataset load(const CommonOptions& o) {
  vkp::Dataset ds = vkp::load_dataset(o.dataset);
  if (o.preds.empty()) return ds;
  const fs::path p(o.preds);
  if (fs::is_directory(p)) {
    if (fs::exists(p / "predictions.jsonl")) ds.predictions = vkp::load_predictions(p / "predictions.jsonl");
    if (fs::exists(p / "detections.jsonl")) ds.detections = vkp::load_detections(p / "detections.jsonl");
  } else if (!fs::exists(p)) {
    throw vkp::IoError("predictions path " + p.string() + " does not exist");
  } else if (is_detections_file(p)) {
    ds.detections = vkp::load_detections(p);
  } else {
    ds.predictions = vkp::load_predictions(p);
  }
  vkp::validate_predictions(ds.manifest, ds.instances, ds.predictions);
  check_detections(ds);
  return ds;
}

void emit(const vkp::EvalReport& report, const CommonOptions& o) {
  const auto format = o.format == "json" ? vkp::ReportFormat::kJson : vkp::ReportFormat::kTable;
  if (o.report.empty()) {
    std::cout << vkp::format_report(report, format);
  } else {
    vkp::write_report(report, o.report, format);
  }
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viewpoint and keypoint evaluation toolkit"};
  app.require_subcommand(1);

  // evaluate-viewpoint
  CommonOptions ev;
  vkp::ViewpointEvalConfig ev_cfg;
  auto* cmd_ev = app.add_subcommand("evaluate-viewpoint", "MedErr/Acc on known boxes or AVP/ARP on detections");
  add_common(cmd_ev, ev, true);
  add_report(cmd_ev, ev);
  cmd_ev->add_option("--theta", ev_cfg.theta, "Accuracy threshold, radians")->check(CLI::PositiveNumber);
  bool gt_boxes = false;
  auto* opt_gt = cmd_ev->add_flag("--gt-boxes", gt_boxes, "Known-box setting (default)");
  cmd_ev->add_flag("--detections", ev_cfg.detections, "Detection setting")->excludes(opt_gt);
  cmd_ev->add_option("--bins", ev_cfg.avp_bins, "Azimuth bin counts for AVP")->delimiter(',');
  cmd_ev->add_option("--iou", ev_cfg.avp.iou_threshold, "IoU threshold for a localization match");

  // evaluate-keypoints
  CommonOptions ek;
  vkp::KeypointEvalConfig ek_cfg;
  std::string mode = "pck";
  auto* cmd_ek = app.add_subcommand("evaluate-keypoints", "PCK on known boxes or APK on detections");
  add_common(cmd_ek, ek, true);
  add_report(cmd_ek, ek);
  cmd_ek->add_option("--alpha", ek_cfg.alpha, "Distance threshold as a fraction of max(h, w)")
      ->check(CLI::PositiveNumber);
  cmd_ek->add_option("--mode", mode, "pck or apk")->check(CLI::IsMember({"pck", "apk"}));
  cmd_ek->add_option("--lambda", ek_cfg.lambda, "Detection score weight in APK ranking")
      ->check(CLI::Range(0.0, 1.0));

  // fuse
  CommonOptions fu;
  vkp::FuseConfig fu_cfg;
  std::string maps_dir, prior_bank, fuse_out;
  std::string upsample = "nearest";
  bool no_prior = false;
  auto* cmd_fu = app.add_subcommand("fuse", "Decode keypoints from response maps and the pose prior");
  add_common(cmd_fu, fu, true);
  cmd_fu->add_option("--maps", maps_dir, "Response map directory (default <dataset>/maps)");
  cmd_fu->add_option("--prior-bank", prior_bank, "Prior bank file (default <dataset>/priors.jsonl)");
  cmd_fu->add_option("--w-fine", fu_cfg.fusion.w_fine, "Weight of the 12x12 responses");
  cmd_fu->add_option("--w-coarse", fu_cfg.fusion.w_coarse, "Weight of the upsampled 6x6 responses");
  cmd_fu->add_option("--sigma", fu_cfg.fusion.sigma, "Prior Gaussian std dev, grid cells")
      ->check(CLI::PositiveNumber);
  cmd_fu->add_option("--neighbor-threshold", fu_cfg.fusion.neighbor_threshold,
                     "Geodesic radius of the prior neighbour set, radians");
  cmd_fu->add_option("--upsample", upsample, "nearest or bilinear")
      ->check(CLI::IsMember({"nearest", "bilinear"}));
  cmd_fu->add_flag("--no-prior", no_prior, "Decode from appearance alone");
  cmd_fu->add_option("--out", fuse_out, "Output directory for predictions.jsonl and detections.jsonl")
      ->required();

  // diagnose
  CommonOptions dg;
  vkp::DiagnoseConfig dg_cfg;
  std::string slices;
  auto* cmd_dg = app.add_subcommand("diagnose", "Error modes, left/right confusion and sliced metrics");
  add_common(cmd_dg, dg, true);
  add_report(cmd_dg, dg);
  cmd_dg->add_option("--slices", slices, "Comma list of size, occlusion");
  cmd_dg->add_flag("--error-modes", dg_cfg.error_modes, "Azimuth error-mode table");
  cmd_dg->add_flag("--left-right", dg_cfg.left_right, "PCK with and without lateral symmetry");
  cmd_dg->add_option("--alpha", dg_cfg.alpha, "PCK threshold")->check(CLI::PositiveNumber);
  cmd_dg->add_option("--theta", dg_cfg.theta, "Accuracy threshold, radians")->check(CLI::PositiveNumber);

  // synth
  std::uint64_t seed = 0;
  std::size_t n = 100;
  std::string noise = "default";
  std::string synth_out;
  vkp::synth::SceneConfig scene;
  bool no_maps = false;
  auto* cmd_sy = app.add_subcommand("synth", "Generate a deterministic synthetic dataset");
  cmd_sy->add_option("--seed", seed, "Random seed");
  cmd_sy->add_option("--n", n, "Number of instances")->check(CLI::PositiveNumber);
  cmd_sy->add_option("--noise-profile,--noise", noise,
                     "Preset (zero, default, flip10, lateral) and/or key=value overrides");
  cmd_sy->add_option("--out", synth_out, "Output dataset directory")->required();
  cmd_sy->add_option("--box-min", scene.box_min, "Smallest box side, pixels");
  cmd_sy->add_option("--box-max", scene.box_max, "Largest box side, pixels");
  cmd_sy->add_option("--occlusion-rate", scene.occlusion_rate, "Fraction of occluded instances");
  cmd_sy->add_option("--truncation-rate", scene.truncation_rate, "Fraction of truncated instances");
  cmd_sy->add_option("--bank-size", scene.bank_size, "Prior bank entries per class");
  cmd_sy->add_option("--per-image", scene.instances_per_image, "Instances per image");
  cmd_sy->add_flag("--no-maps", no_maps, "Skip response maps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (cmd_ev->parsed()) {
      emit(vkp::evaluate_viewpoint(load(ev), ev_cfg), ev);
    } else if (cmd_ek->parsed()) {
      ek_cfg.mode = mode == "apk" ? vkp::KeypointMode::kApk : vkp::KeypointMode::kPck;
      ek_cfg.threads = ek.threads;
      emit(vkp::evaluate_keypoints(load(ek), ek_cfg), ek);
    } else if (cmd_fu->parsed()) {
      vkp::Dataset ds = load(fu);
      if (!maps_dir.empty()) ds.maps = vkp::load_maps_directory(maps_dir, ds);
      if (!prior_bank.empty()) {
        if (!fs::exists(prior_bank)) throw vkp::IoError("prior bank " + prior_bank + " does not exist");
        ds.priors = vkp::load_prior_banks(prior_bank, ds.manifest);
      }
      fu_cfg.fusion.upsample = upsample == "bilinear" ? vkp::UpsampleMode::kBilinear : vkp::UpsampleMode::kNearest;
      fu_cfg.fusion.use_prior = !no_prior;
      fu_cfg.threads = fu.threads;
      const vkp::FuseResult r = vkp::fuse_dataset(ds, fu_cfg);
      fs::create_directories(fuse_out);
      vkp::write_predictions(fs::path(fuse_out) / "predictions.jsonl", r.predictions);
      vkp::write_detections(fs::path(fuse_out) / "detections.jsonl", r.detections);
    } else if (cmd_dg->parsed()) {
      for (const auto& s : split(slices)) {
        if (s == "size") dg_cfg.size_slices = true;
        else if (s == "occlusion") dg_cfg.occlusion_slices = true;
        else throw std::invalid_argument("unknown slice '" + s + "' (expected size, occlusion)");
      }
      emit(vkp::diagnose(load(dg), dg_cfg), dg);
    } else if (cmd_sy->parsed()) {
      scene.with_maps = !no_maps;
      const auto profile = vkp::synth::NoiseProfile::parse(noise);
      vkp::write_dataset(vkp::synth::generate_scene(seed, n, profile, scene), synth_out);
    }
  } catch (const vkp::IoError& e) {
    std::fprintf(stderr, "vkp: %s\n", e.what());
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "vkp: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    // Parse, validation, version and argument errors.
    std::fprintf(stderr, "vkp: %s\n", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
