#include "vkp/pipeline.hpp"

#include <stdexcept>
#include <string>
#include <unordered_map>

#include "vkp/parallel.hpp"
#include "vkp/viewpoint_codec.hpp"

namespace vkp {
namespace {

std::vector<KeypointHypothesis> decode_record(const RecordMaps& maps, const std::optional<EulerAngles>& view,
                                              const Box& box, const PriorBank* bank,
                                              const FusionOptions& base) {
  FusionOptions options = base;
  RotationMatrix r;
  if (view) {
    r = euler_to_rotation(*view);
  } else {
    options.use_prior = false;
  }
  const auto decoded = decode_keypoints(maps.fine, maps.coarse, r, box, bank, options);
  std::vector<KeypointHypothesis> out;
  out.reserve(decoded.size());
  for (std::size_t k = 0; k < decoded.size(); ++k) {
    out.push_back({maps.fine[k].keypoint_id, decoded[k].location, decoded[k].score});
  }
  return out;
}

std::unordered_map<std::string, const Instance*> index_instances(std::span<const Instance> instances) {
  std::unordered_map<std::string, const Instance*> by_id;
  for (const auto& i : instances) by_id.emplace(i.id, &i);
  return by_id;
}

ReportValue mean_of(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Known-box viewpoint metrics per class plus class means.
void known_box_viewpoint(const Dataset& ds, std::span<const Instance> instances, double theta,
                         EvalReport& report) {
  std::unordered_map<std::string, const Prediction*> preds;
  for (const auto& p : ds.predictions) preds.emplace(p.instance_id, &p);
  std::map<std::size_t, std::vector<RotationPair>> pairs;
  for (const auto& inst : instances) {
    if (!inst.viewpoint) continue;
    const auto it = preds.find(inst.id);
    if (it == preds.end()) throw std::invalid_argument("no prediction for instance '" + inst.id + "'");
    const auto view = prediction_viewpoint(*it->second, ds.manifest, inst.class_index);
    if (!view) throw std::invalid_argument("prediction for '" + inst.id + "' has no viewpoint");
    pairs[inst.class_index].push_back({euler_to_rotation(*inst.viewpoint), euler_to_rotation(*view)});
  }
  std::vector<double> med, acc;
  for (const auto& [cls, list] : pairs) {
    auto& row = report.per_class[ds.manifest.class_name(cls)];
    row["med_err"] = median_error(list);
    row["acc"] = accuracy_at(list, theta);
    row["count"] = static_cast<double>(list.size());
    med.push_back(*row["med_err"]);
    acc.push_back(*row["acc"]);
  }
  report.summary["med_err"] = mean_of(med);
  report.summary["acc"] = mean_of(acc);
}

void add_class_aps(const Manifest& manifest, const std::string& metric, const std::vector<ClassAp>& aps,
                   EvalReport& report) {
  std::vector<double> values;
  for (const auto& c : aps) {
    const std::string& name = manifest.class_name(c.class_index);
    if (c.no_ground_truth) {
      report.per_class[name][metric] = std::nullopt;
      continue;
    }
    report.per_class[name][metric] = c.ap;
    report.curves[name + "/" + metric] = c.curve;
    values.push_back(c.ap);
  }
  report.summary[metric] = mean_of(values);
}

std::vector<Instance> without_excluded(const Dataset& ds) {
  const auto excluded = ds.manifest.excluded_indices();
  std::vector<Instance> out;
  for (const auto& i : ds.instances) {
    if (!excluded.contains(i.class_index)) out.push_back(i);
  }
  return out;
}

void add_pck(const Manifest& manifest, const PckResult& r, const std::string& metric, EvalReport& report) {
  for (const auto& c : r.classes) {
    const std::string& name = manifest.class_name(c.class_index);
    report.per_class[name][metric] = c.mean;
    report.per_keypoint[name][metric] = {c.per_keypoint.begin(), c.per_keypoint.end()};
  }
  report.summary[metric] = r.mean_over_classes;
  report.summary[metric + "_pooled"] = r.pooled;
}

}  // namespace

std::optional<EulerAngles> prediction_viewpoint(const Prediction& p, const Manifest& manifest,
                                                std::size_t class_index) {
  if (p.viewpoint) return p.viewpoint;
  if (p.viewpoint_scores.empty()) return std::nullopt;
  const std::size_t per_class = 3 * manifest.viewpoint_bins;
  BinningConfig cfg{p.viewpoint_scores.size() / per_class, 3, manifest.viewpoint_bins};
  return decode_viewpoint(ViewpointScores(p.viewpoint_scores, cfg), class_index);
}

FuseResult fuse_dataset(const Dataset& ds, const FuseConfig& config) {
  FuseResult out{ds.predictions, ds.detections};
  const auto instances = index_instances(ds.instances);

  parallel_for(out.predictions.size(), config.threads, [&](std::size_t i) {
    Prediction& p = out.predictions[i];
    const auto maps = ds.maps.find(p.instance_id);
    if (maps == ds.maps.end()) return;
    const auto inst = instances.find(p.instance_id);
    if (inst == instances.end()) {
      throw std::invalid_argument("prediction for unknown instance '" + p.instance_id + "'");
    }
    const Instance& gt = *inst->second;
    p.keypoints = decode_record(maps->second, prediction_viewpoint(p, ds.manifest, gt.class_index), gt.bbox,
                                ds.prior_for(gt.class_index), config.fusion);
  });

  parallel_for(out.detections.size(), config.threads, [&](std::size_t i) {
    Detection& d = out.detections[i];
    const auto maps = ds.maps.find(d.id);
    if (maps == ds.maps.end()) return;
    d.keypoint_hypotheses =
        decode_record(maps->second, d.viewpoint, d.bbox, ds.prior_for(d.class_index), config.fusion);
  });
  return out;
}

EvalReport evaluate_viewpoint(const Dataset& ds, const ViewpointEvalConfig& config) {
  EvalReport report;
  if (!config.detections) {
    report.title = "viewpoint (known boxes)";
    known_box_viewpoint(ds, ds.instances, config.theta, report);
    return report;
  }
  report.title = "viewpoint (detections)";
  for (std::size_t bins : config.avp_bins) {
    add_class_aps(ds.manifest, "avp_" + std::to_string(bins), avp(ds.detections, ds.instances, bins, config.avp),
                  report);
  }
  add_class_aps(ds.manifest, "avp_theta", avp_theta(ds.detections, ds.instances, config.theta, config.avp),
                report);
  add_class_aps(ds.manifest, "arp_theta", arp_theta(ds.detections, ds.instances, config.theta, config.avp),
                report);
  add_class_aps(ds.manifest, "ap", viewpoint_ap(ds.detections, ds.instances, {}, config.avp), report);
  return report;
}

EvalReport evaluate_keypoints(const Dataset& ds, const KeypointEvalConfig& config) {
  EvalReport report;
  const auto kpc = ds.manifest.keypoints_per_class();
  if (config.mode == KeypointMode::kPck) {
    report.title = "keypoints (pck)";
    add_pck(ds.manifest, pck(ds.instances, ds.predictions, kpc, config.alpha), "pck", report);
    return report;
  }

  report.title = "keypoints (apk)";
  const auto aps = apk(ds.detections, ds.instances, kpc, config.alpha, config.lambda, config.threads);
  std::map<std::size_t, std::vector<ReportValue>> per_class;
  for (const auto& a : aps) {
    auto& row = per_class[a.class_index];
    row.resize(kpc[a.class_index]);
    if (a.num_gt == 0) continue;
    row[a.keypoint_id] = a.ap;
    report.curves[ds.manifest.class_name(a.class_index) + "/apk/" + std::to_string(a.keypoint_id)] = a.curve;
  }
  std::vector<double> class_means;
  for (const auto& [cls, row] : per_class) {
    const std::string& name = ds.manifest.class_name(cls);
    report.per_keypoint[name]["apk"] = row;
    std::vector<double> values;
    for (const auto& v : row) {
      if (v) values.push_back(*v);
    }
    report.per_class[name]["apk"] = mean_of(values);
    if (!values.empty()) class_means.push_back(*mean_of(values));
  }
  report.summary["apk"] = mean_of(class_means);
  return report;
}

EvalReport diagnose(const Dataset& ds, const DiagnoseConfig& config) {
  EvalReport report;
  report.title = "diagnostics";
  const auto kpc = ds.manifest.keypoints_per_class();
  const std::vector<Instance> kept = without_excluded(ds);

  if (config.error_modes) {
    std::unordered_map<std::string, const Prediction*> preds;
    for (const auto& p : ds.predictions) preds.emplace(p.instance_id, &p);
    std::vector<AzimuthPair> pairs;
    for (const auto& inst : kept) {
      if (!inst.viewpoint) continue;
      const auto it = preds.find(inst.id);
      if (it == preds.end()) throw std::invalid_argument("no prediction for instance '" + inst.id + "'");
      const auto view = prediction_viewpoint(*it->second, ds.manifest, inst.class_index);
      if (!view) throw std::invalid_argument("prediction for '" + inst.id + "' has no viewpoint");
      pairs.push_back({inst.viewpoint->azimuth(), view->azimuth()});
    }
    if (pairs.empty()) {
      for (std::size_t m = 0; m < kNumErrorModes; ++m) {
        report.summary[std::string("error_mode/") + error_mode_name(static_cast<ErrorMode>(m))] = std::nullopt;
      }
    } else {
      const ErrorModeTally tally = error_mode_decomposition(pairs);
      for (std::size_t m = 0; m < kNumErrorModes; ++m) {
        const auto mode = static_cast<ErrorMode>(m);
        report.summary[std::string("error_mode/") + error_mode_name(mode)] = tally.percentage(mode);
      }
      report.summary["error_mode/count"] = static_cast<double>(tally.total());
    }
  }

  if (config.left_right) {
    add_pck(ds.manifest, pck(ds.instances, ds.predictions, kpc, config.alpha), "pck", report);
    add_pck(ds.manifest, left_right_pck(ds.instances, ds.predictions, kpc, ds.manifest.symmetry(), config.alpha),
            "pck_lr", report);
  }

  std::vector<SliceSpec> specs;
  if (config.size_slices && kept.size() >= 3) {
    for (auto& s : size_slice_specs(kept)) specs.push_back(std::move(s));
  } else if (config.size_slices) {
    for (const char* name : {"small", "medium", "large"}) {
      specs.push_back({name, [](const Instance&) { return false; }});
    }
  }
  if (config.occlusion_slices) {
    for (auto& s : occlusion_slice_specs()) specs.push_back(std::move(s));
  }
  if (!specs.empty()) {
    const SliceMetric metric = [&](std::span<const Instance> subset) {
      EvalReport r;
      known_box_viewpoint(ds, subset, config.theta, r);
      add_pck(ds.manifest, pck(subset, ds.predictions, kpc, config.alpha), "pck", r);
      return r;
    };
    report.slices = sliced_report(metric, ds.instances, specs, ds.manifest.excluded_indices());
  }
  return report;
}

}  // namespace vkp
