#include "vkp/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace vkp::synth {
namespace {

constexpr double kSlotSize = 500.0;
// Projected template points fill at most 1/kMargin of the crop half-width.
constexpr double kMargin = 1.1;
constexpr double kOccludedKeypointRate = 0.4;
constexpr double kTruePositiveScore = 1.0;
constexpr double kFalsePositiveScore = 0.5;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    if (!(hi > lo)) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double stddev) {
    if (!(stddev > 0.0)) return 0.0;
    return std::normal_distribution<double>(0.0, stddev)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

 private:
  std::mt19937_64 engine_;
};

EulerAngles sample_viewpoint(Rng& rng) {
  const double azimuth = rng.uniform(0.0, kTwoPi);
  const double elevation = rng.uniform(-0.1, 0.5);
  const double cyclorotation = rng.uniform(-0.1, 0.1);
  return {azimuth, elevation, cyclorotation};
}

double template_radius(const ObjectTemplate& t) {
  double r = 0.0;
  for (const auto& p : t.points) r = std::max(r, p.norm());
  return r;
}

std::vector<std::size_t> partners_of(const ObjectTemplate& t) {
  std::vector<std::size_t> partner(t.points.size());
  for (std::size_t k = 0; k < partner.size(); ++k) partner[k] = k;
  for (const auto& [a, b] : t.symmetry_pairs) {
    partner[a] = b;
    partner[b] = a;
  }
  return partner;
}

std::string make_id(const char* prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, n);
  return buf;
}

Point2 to_grid(const Box& box, const Point2& px) {
  return {(px.x - box.x) / box.w * static_cast<double>(kGridSize),
          (px.y - box.y) / box.h * static_cast<double>(kGridSize)};
}

Point2 to_pixels(const Box& box, const Point2& g) {
  return {box.x + g.x / static_cast<double>(kGridSize) * box.w,
          box.y + g.y / static_cast<double>(kGridSize) * box.h};
}

// log(w1·N(p1, s) + w2·N(p2, s)) at a cell center, unnormalized; w2 = 0
// drops the second peak.
double two_peak_log(const Point2& c, const Point2& p1, double w1, const Point2& p2, double w2,
                    double s) {
  const double inv = 1.0 / (2.0 * s * s);
  const double l1 = std::log(w1) - ((c.x - p1.x) * (c.x - p1.x) + (c.y - p1.y) * (c.y - p1.y)) * inv;
  if (!(w2 > 0.0)) return l1;
  const double l2 = std::log(w2) - ((c.x - p2.x) * (c.x - p2.x) + (c.y - p2.y) * (c.y - p2.y)) * inv;
  const double m = std::max(l1, l2);
  return m + std::log(std::exp(l1 - m) + std::exp(l2 - m));
}

// One channel pair (fine, coarse). Peaks are given in fine-grid coordinates.
std::pair<ResponseMap, ResponseMap> response_channel(std::size_t cls, std::size_t kp,
                                                     const Point2& strong, const Point2& weak,
                                                     double weak_ratio, double sigma) {
  ResponseMap fine{cls, kp, Grid(kGridSize, kGridSize)};
  ResponseMap coarse{cls, kp, Grid(kCoarseGridSize, kCoarseGridSize)};
  for (std::size_t i = 0; i < kGridSize; ++i) {
    for (std::size_t j = 0; j < kGridSize; ++j) {
      const Point2 c{static_cast<double>(j) + 0.5, static_cast<double>(i) + 0.5};
      fine.grid(i, j) = static_cast<float>(two_peak_log(c, strong, 1.0, weak, weak_ratio, sigma));
    }
  }
  for (std::size_t i = 0; i < kCoarseGridSize; ++i) {
    for (std::size_t j = 0; j < kCoarseGridSize; ++j) {
      const Point2 c{2.0 * static_cast<double>(j) + 1.0, 2.0 * static_cast<double>(i) + 1.0};
      coarse.grid(i, j) =
          static_cast<float>(two_peak_log(c, strong, 1.0, weak, weak_ratio, 2.0 * sigma));
    }
  }
  return {std::move(fine), std::move(coarse)};
}

void set_field(NoiseProfile& p, std::string_view key, double value) {
  if (key == "viewpoint_jitter") p.viewpoint_jitter = value;
  else if (key == "pi_flip" || key == "pi_flip_prob") p.pi_flip_prob = value;
  else if (key == "lateral_swap" || key == "lateral_swap_prob") p.lateral_swap_prob = value;
  else if (key == "keypoint_jitter") p.keypoint_jitter = value;
  else if (key == "false_positive_rate" || key == "fp_rate") p.false_positive_rate = value;
  else if (key == "score_noise") p.score_noise = value;
  else throw std::invalid_argument("noise profile: unknown key '" + std::string(key) + "'");
}

bool preset(std::string_view name, NoiseProfile* out) {
  NoiseProfile p;
  if (name == "zero") {
  } else if (name == "default") {
    p = {0.1, 0.05, 0.1, 4.0, 0.2, 0.1};
  } else if (name == "flip10") {
    p = {0.01, 0.10, 0.0, 0.0, 0.0, 0.0};
  } else if (name == "lateral") {
    p = {0.02, 0.0, 0.5, 1.0, 0.0, 0.0};
  } else {
    return false;
  }
  *out = p;
  return true;
}

}  // namespace

void NoiseProfile::validate() const {
  auto prob = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
  };
  auto dev = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be >= 0");
  };
  dev(viewpoint_jitter, "viewpoint_jitter");
  prob(pi_flip_prob, "pi_flip_prob");
  prob(lateral_swap_prob, "lateral_swap_prob");
  dev(keypoint_jitter, "keypoint_jitter");
  dev(false_positive_rate, "false_positive_rate");
  dev(score_noise, "score_noise");
}

NoiseProfile NoiseProfile::parse(std::string_view spec) {
  NoiseProfile p;
  std::size_t start = 0;
  bool first = true;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', start), spec.size());
    const std::string_view item = spec.substr(start, end - start);
    start = end + 1;
    if (item.empty()) {
      if (end == spec.size()) break;
      continue;
    }
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) {
      if (!first || !preset(item, &p)) {
        throw std::invalid_argument("noise profile: unknown preset '" + std::string(item) + "'");
      }
    } else {
      const std::string value(item.substr(eq + 1));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty()) {
        throw std::invalid_argument("noise profile: bad value '" + value + "'");
      }
      set_field(p, item.substr(0, eq), v);
    }
    first = false;
    if (end == spec.size()) break;
  }
  p.validate();
  return p;
}

void SceneConfig::validate() const {
  if (!(box_min > 0.0) || !(box_max >= box_min) || box_max > kSlotSize) {
    throw std::invalid_argument("scene: need 0 < box_min <= box_max <= 500");
  }
  if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0) ||
      !(truncation_rate >= 0.0 && truncation_rate <= 1.0)) {
    throw std::invalid_argument("scene: occlusion and truncation rates must be in [0, 1]");
  }
  if (bank_size == 0) throw std::invalid_argument("scene: bank_size must be positive");
  if (instances_per_image == 0) throw std::invalid_argument("scene: instances_per_image must be positive");
  if (!(distractor_ratio > 0.0) || !(map_sigma > 0.0)) {
    throw std::invalid_argument("scene: distractor_ratio and map_sigma must be positive");
  }
}

const std::vector<ObjectTemplate>& object_templates() {
  static const std::vector<ObjectTemplate> templates = [] {
    std::vector<ObjectTemplate> t;
    t.push_back({"car",
                 {"front_left_wheel", "front_right_wheel", "rear_left_wheel", "rear_right_wheel",
                  "left_headlight", "right_headlight", "left_taillight", "right_taillight"},
                 {{1.3, 0.8, -0.5}, {1.3, -0.8, -0.5}, {-1.3, 0.8, -0.5}, {-1.3, -0.8, -0.5},
                  {2.0, 0.6, 0.0}, {2.0, -0.6, 0.0}, {-2.0, 0.6, 0.1}, {-2.0, -0.6, 0.1}},
                 {{0, 1}, {2, 3}, {4, 5}, {6, 7}}});
    t.push_back({"chair",
                 {"front_left_leg", "front_right_leg", "back_left_leg", "back_right_leg",
                  "back_top_left", "back_top_right"},
                 {{0.4, 0.4, -1.0}, {0.4, -0.4, -1.0}, {-0.4, 0.4, -1.0}, {-0.4, -0.4, -1.0},
                  {-0.45, 0.4, 1.0}, {-0.45, -0.4, 1.0}},
                 {{0, 1}, {2, 3}, {4, 5}}});
    t.push_back({"bottle",
                 {"mouth", "body_left", "body_right", "base"},
                 {{0.0, 0.0, 1.2}, {0.0, 0.4, 0.2}, {0.0, -0.4, 0.2}, {0.0, 0.0, -1.0}},
                 {{1, 2}}});
    return t;
  }();
  return templates;
}

Manifest synthetic_manifest() {
  Manifest m;
  for (const auto& t : object_templates()) m.classes.push_back({t.name, t.keypoint_names, t.symmetry_pairs});
  return m;
}

Point2 project_to_grid(const ObjectTemplate& tmpl, std::size_t keypoint, const RotationMatrix& rotation) {
  const Eigen::Vector3d c = rotation.matrix() * tmpl.points.at(keypoint);
  const double half = 0.5 * static_cast<double>(kGridSize);
  const double scale = half / (kMargin * template_radius(tmpl));
  return {half + scale * c.y(), half - scale * c.z()};
}

Dataset generate_scene(std::uint64_t seed, std::size_t n_instances, const NoiseProfile& profile,
                       const SceneConfig& scene) {
  if (n_instances == 0) throw std::invalid_argument("generate_scene: n_instances must be positive");
  profile.validate();
  scene.validate();

  Rng rng(seed);
  Dataset ds;
  ds.manifest = synthetic_manifest();
  const auto& templates = object_templates();

  for (std::size_t c = 0; c < templates.size(); ++c) {
    PriorBank bank{c, {}};
    bank.entries.reserve(scene.bank_size);
    for (std::size_t b = 0; b < scene.bank_size; ++b) {
      const RotationMatrix r = euler_to_rotation(sample_viewpoint(rng));
      PriorEntry e{r, {}};
      for (std::size_t k = 0; k < templates[c].points.size(); ++k) {
        e.keypoints.emplace_back(project_to_grid(templates[c], k, r));
      }
      bank.entries.push_back(std::move(e));
    }
    ds.priors.push_back(std::move(bank));
  }

  std::size_t detection_count = 0;
  const double swap_weak = profile.lateral_swap_prob > 0.0 ? scene.distractor_ratio : 0.0;

  for (std::size_t i = 0; i < n_instances; ++i) {
    const std::size_t cls = rng.index(templates.size());
    const ObjectTemplate& tmpl = templates[cls];
    const auto partner = partners_of(tmpl);
    const std::size_t nkp = tmpl.points.size();
    const std::size_t slot = i % scene.instances_per_image;
    const std::string image_id = make_id("img", i / scene.instances_per_image, 5);

    Instance inst;
    inst.id = make_id("i", i, 6);
    inst.image_id = image_id;
    inst.class_index = cls;
    const double w = rng.uniform(scene.box_min, scene.box_max);
    const double h = rng.uniform(scene.box_min, scene.box_max);
    inst.bbox = {kSlotSize * static_cast<double>(slot) + rng.uniform(0.0, kSlotSize - w),
                 rng.uniform(0.0, kSlotSize - h), w, h};
    const EulerAngles gt_view = sample_viewpoint(rng);
    inst.viewpoint = gt_view;
    inst.occluded = rng.bernoulli(scene.occlusion_rate);
    inst.truncated = rng.bernoulli(scene.truncation_rate);
    const RotationMatrix gt_rot = euler_to_rotation(gt_view);
    std::vector<Point2> gt_px(nkp);
    for (std::size_t k = 0; k < nkp; ++k) {
      gt_px[k] = to_pixels(inst.bbox, project_to_grid(tmpl, k, gt_rot));
      const bool hidden = inst.occluded && rng.bernoulli(kOccludedKeypointRate);
      inst.keypoints.push_back({k, gt_px[k], !hidden});
    }

    // Viewpoint prediction: optional π-flip, then tangent-space jitter.
    const bool flip = rng.bernoulli(profile.pi_flip_prob);
    EulerAngles pred_view = gt_view;
    if (flip || profile.viewpoint_jitter > 0.0) {
      RotationMatrix r = flip ? pi_flip(gt_rot) : gt_rot;
      const Eigen::Vector3d omega(rng.normal(profile.viewpoint_jitter), rng.normal(profile.viewpoint_jitter),
                                  rng.normal(profile.viewpoint_jitter));
      pred_view = rotation_to_euler(rotation_from_axis_angle(omega) * r);
    }

    // Keypoint prediction: jittered ground truth, left/right swapped on confusion.
    const bool swap = rng.bernoulli(profile.lateral_swap_prob);
    Prediction pred;
    pred.instance_id = inst.id;
    pred.viewpoint = pred_view;
    RecordMaps maps;
    for (std::size_t k = 0; k < nkp; ++k) {
      const Point2 jitter{rng.normal(profile.keypoint_jitter), rng.normal(profile.keypoint_jitter)};
      const std::size_t strong_src = swap ? partner[k] : k;
      const std::size_t weak_src = swap ? k : partner[k];
      const Point2 strong{gt_px[strong_src].x + jitter.x, gt_px[strong_src].y + jitter.y};
      const Point2 weak{gt_px[weak_src].x + jitter.x, gt_px[weak_src].y + jitter.y};
      pred.keypoints.push_back({k, strong, 0.0});
      if (scene.with_maps) {
        const double weak_ratio = partner[k] == k ? 0.0 : swap_weak;
        auto [fine, coarse] = response_channel(cls, k, to_grid(inst.bbox, strong),
                                               to_grid(inst.bbox, weak), weak_ratio, scene.map_sigma);
        maps.fine.push_back(std::move(fine));
        maps.coarse.push_back(std::move(coarse));
      }
    }

    Detection det;
    det.id = make_id("d", detection_count++, 6);
    det.image_id = image_id;
    det.class_index = cls;
    det.bbox = inst.bbox;
    det.score = kTruePositiveScore + rng.normal(profile.score_noise);
    det.viewpoint = pred_view;
    det.keypoint_hypotheses = pred.keypoints;
    if (scene.with_maps) ds.maps[det.id] = maps;
    ds.detections.push_back(std::move(det));

    // False positives sit in the image's spare slot, away from every object.
    const double fp_expect = profile.false_positive_rate;
    std::size_t n_fp = static_cast<std::size_t>(std::floor(fp_expect));
    if (rng.bernoulli(fp_expect - std::floor(fp_expect))) ++n_fp;
    for (std::size_t f = 0; f < n_fp; ++f) {
      Detection fp;
      fp.id = make_id("d", detection_count++, 6);
      fp.image_id = image_id;
      fp.class_index = rng.index(templates.size());
      const double fw = rng.uniform(scene.box_min, scene.box_max);
      const double fh = rng.uniform(scene.box_min, scene.box_max);
      fp.bbox = {kSlotSize * static_cast<double>(scene.instances_per_image) + rng.uniform(0.0, kSlotSize - fw),
                 rng.uniform(0.0, kSlotSize - fh), fw, fh};
      fp.score = kFalsePositiveScore + rng.normal(profile.score_noise);
      fp.viewpoint = sample_viewpoint(rng);
      RecordMaps fp_maps;
      for (std::size_t k = 0; k < templates[fp.class_index].points.size(); ++k) {
        const Point2 g{rng.uniform(0.0, 12.0), rng.uniform(0.0, 12.0)};
        fp.keypoint_hypotheses.push_back({k, to_pixels(fp.bbox, g), 0.0});
        if (scene.with_maps) {
          auto [fine, coarse] = response_channel(fp.class_index, k, g, g, 0.0, scene.map_sigma);
          fp_maps.fine.push_back(std::move(fine));
          fp_maps.coarse.push_back(std::move(coarse));
        }
      }
      if (scene.with_maps) ds.maps[fp.id] = std::move(fp_maps);
      ds.detections.push_back(std::move(fp));
    }

    if (scene.with_maps) ds.maps[inst.id] = std::move(maps);
    ds.instances.push_back(std::move(inst));
    ds.predictions.push_back(std::move(pred));
  }
  return ds;
}

}  // namespace vkp::synth
