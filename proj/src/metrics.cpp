#include "vkp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "vkp/parallel.hpp"
#include "vkp/viewpoint_codec.hpp"

namespace vkp {
namespace {

constexpr double kRadToDeg = 180.0 / kPi;

// Stable descending-score order of the given indices.
template <typename ScoreFn>
std::vector<std::size_t> rank_by_score(std::size_t n, ScoreFn score) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score(a) > score(b); });
  return order;
}

const EulerAngles& require_viewpoint(const std::optional<EulerAngles>& v, const std::string& what) {
  if (!v) throw std::invalid_argument(what + " has no viewpoint");
  return *v;
}

}  // namespace

double median_error(std::span<const RotationPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("median_error: empty list");
  std::vector<double> errors;
  errors.reserve(pairs.size());
  for (const auto& p : pairs) errors.push_back(geodesic_distance(p.gt, p.pred) * kRadToDeg);
  std::sort(errors.begin(), errors.end());
  const std::size_t n = errors.size();
  if (n % 2 == 1) return errors[n / 2];
  return 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
}

double accuracy_at(std::span<const RotationPair> pairs, double theta) {
  if (pairs.empty()) throw std::invalid_argument("accuracy_at: empty list");
  std::size_t hits = 0;
  for (const auto& p : pairs) {
    if (geodesic_distance(p.gt, p.pred) < theta) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

PrCurve pr_curve(const std::vector<bool>& ranked_is_tp, std::size_t num_gt) {
  PrCurve curve;
  if (num_gt == 0) return curve;
  curve.recall.reserve(ranked_is_tp.size());
  curve.precision.reserve(ranked_is_tp.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked_is_tp.size(); ++i) {
    if (ranked_is_tp[i]) ++tp;
    curve.recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  return curve;
}

double voc_ap(std::span<const double> recalls, std::span<const double> precisions) {
  if (recalls.size() != precisions.size()) {
    throw std::invalid_argument("voc_ap: recall and precision lengths differ");
  }
  const std::size_t n = recalls.size();
  std::vector<double> mrec(n + 2), mpre(n + 2);
  mrec.front() = 0.0;
  mpre.front() = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mrec[i + 1] = recalls[i];
    mpre[i + 1] = precisions[i];
  }
  mrec.back() = 1.0;
  mpre.back() = 0.0;
  for (std::size_t i = n + 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 0; i + 1 < mrec.size(); ++i) {
    if (mrec[i + 1] != mrec[i]) ap += (mrec[i + 1] - mrec[i]) * mpre[i + 1];
  }
  return ap;
}

std::vector<ClassAp> viewpoint_ap(std::span<const Detection> detections,
                                  std::span<const Instance> ground_truth, const ViewpointTest& test,
                                  const AvpOptions& options) {
  std::set<std::size_t> classes;
  for (const auto& g : ground_truth) classes.insert(g.class_index);
  for (const auto& d : detections) classes.insert(d.class_index);

  std::vector<ClassAp> out;
  for (std::size_t cls : classes) {
    // image id -> indices of that image's ground truth of this class
    std::map<std::string, std::vector<std::size_t>> gt_by_image;
    std::size_t num_gt = 0;
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
      if (ground_truth[i].class_index != cls) continue;
      gt_by_image[ground_truth[i].image_id].push_back(i);
      ++num_gt;
    }
    std::vector<std::size_t> dets;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (detections[i].class_index == cls) dets.push_back(i);
    }
    const auto order =
        rank_by_score(dets.size(), [&](std::size_t k) { return detections[dets[k]].score; });

    std::vector<bool> matched(ground_truth.size(), false);
    std::vector<bool> is_tp;
    is_tp.reserve(order.size());
    for (std::size_t k : order) {
      const Detection& det = detections[dets[k]];
      std::size_t best = std::numeric_limits<std::size_t>::max();
      double best_iou = -1.0;
      if (auto it = gt_by_image.find(det.image_id); it != gt_by_image.end()) {
        for (std::size_t g : it->second) {
          if (matched[g]) continue;
          const double o = iou(det.bbox, ground_truth[g].bbox);
          if (o > best_iou) {
            best_iou = o;
            best = g;
          }
        }
      }
      if (!(best_iou > options.iou_threshold)) {
        is_tp.push_back(false);
        continue;
      }
      bool correct = true;
      if (test) {
        const auto& gt_vp = require_viewpoint(ground_truth[best].viewpoint,
                                              "ground truth '" + ground_truth[best].id + "'");
        const auto& det_vp = require_viewpoint(det.viewpoint, "detection '" + det.id + "'");
        correct = test(gt_vp, det_vp);
      }
      if (correct || options.consume_on_wrong_viewpoint) matched[best] = true;
      is_tp.push_back(correct);
    }

    ClassAp result;
    result.class_index = cls;
    result.num_gt = num_gt;
    result.num_detections = dets.size();
    result.no_ground_truth = num_gt == 0;
    result.curve = pr_curve(is_tp, num_gt);
    result.ap = num_gt == 0 ? 0.0 : voc_ap(result.curve.recall, result.curve.precision);
    out.push_back(std::move(result));
  }
  return out;
}

std::vector<ClassAp> avp(std::span<const Detection> detections,
                         std::span<const Instance> ground_truth, std::size_t n_bins,
                         const AvpOptions& options) {
  if (n_bins == 0) throw std::invalid_argument("avp: n_bins must be positive");
  return viewpoint_ap(
      detections, ground_truth,
      [n_bins](const EulerAngles& gt, const EulerAngles& pred) {
        return angle_to_bin(gt.azimuth(), n_bins) == angle_to_bin(pred.azimuth(), n_bins);
      },
      options);
}

std::vector<ClassAp> avp_theta(std::span<const Detection> detections,
                               std::span<const Instance> ground_truth, double theta,
                               const AvpOptions& options) {
  return viewpoint_ap(
      detections, ground_truth,
      [theta](const EulerAngles& gt, const EulerAngles& pred) {
        return azimuth_distance(gt.azimuth(), pred.azimuth()) < theta;
      },
      options);
}

std::vector<ClassAp> arp_theta(std::span<const Detection> detections,
                               std::span<const Instance> ground_truth, double theta,
                               const AvpOptions& options) {
  return viewpoint_ap(
      detections, ground_truth,
      [theta](const EulerAngles& gt, const EulerAngles& pred) {
        return geodesic_distance(euler_to_rotation(gt), euler_to_rotation(pred)) < theta;
      },
      options);
}

namespace detail {

PckResult pck_impl(std::span<const Instance> instances, std::span<const Prediction> predictions,
                   std::span<const std::size_t> keypoints_per_class, double alpha,
                   const SymmetryMap* partners) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.instance_id, &p);

  std::map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> tallies;
  for (const auto& inst : instances) {
    if (inst.class_index >= keypoints_per_class.size()) {
      throw std::invalid_argument("pck: instance '" + inst.id + "' has an unknown class");
    }
    const std::size_t nkp = keypoints_per_class[inst.class_index];
    auto& [correct, total] = tallies[inst.class_index];
    correct.resize(nkp, 0);
    total.resize(nkp, 0);
    const auto it = by_id.find(inst.id);
    if (it == by_id.end()) {
      throw std::invalid_argument("pck: no prediction for instance '" + inst.id + "'");
    }
    const Prediction& pred = *it->second;
    const double radius = alpha * std::max(inst.bbox.w, inst.bbox.h);
    for (const auto& kp : inst.keypoints) {
      if (!kp.visible) continue;
      if (kp.id >= nkp) {
        throw std::invalid_argument("pck: instance '" + inst.id + "' has keypoint id " +
                                    std::to_string(kp.id) + " beyond the class layout");
      }
      ++total[kp.id];
      const KeypointHypothesis* guess = pred.find_keypoint(kp.id);
      if (!guess) continue;
      bool hit = distance(guess->location, kp.location) <= radius;
      if (!hit && partners) {
        const auto& cls_partners = partners->at(inst.class_index);
        const std::size_t partner = kp.id < cls_partners.size() ? cls_partners[kp.id] : kp.id;
        if (partner != kp.id) {
          if (const KeypointAnnotation* other = inst.find_keypoint(partner)) {
            hit = distance(guess->location, other->location) <= radius;
          }
        }
      }
      if (hit) ++correct[kp.id];
    }
  }

  PckResult result;
  std::size_t all_correct = 0, all_total = 0;
  double class_sum = 0.0;
  std::size_t class_count = 0;
  for (const auto& [cls, tally] : tallies) {
    const auto& [correct, total] = tally;
    ClassPck c;
    c.class_index = cls;
    double kp_sum = 0.0;
    std::size_t kp_count = 0;
    for (std::size_t k = 0; k < total.size(); ++k) {
      c.correct += correct[k];
      c.total += total[k];
      if (total[k] == 0) {
        c.per_keypoint.emplace_back(std::nullopt);
        continue;
      }
      const double f = static_cast<double>(correct[k]) / static_cast<double>(total[k]);
      c.per_keypoint.emplace_back(f);
      kp_sum += f;
      ++kp_count;
    }
    if (kp_count > 0) {
      c.mean = kp_sum / static_cast<double>(kp_count);
      class_sum += *c.mean;
      ++class_count;
    }
    all_correct += c.correct;
    all_total += c.total;
    result.classes.push_back(std::move(c));
  }
  if (class_count > 0) result.mean_over_classes = class_sum / static_cast<double>(class_count);
  if (all_total > 0) {
    result.pooled = static_cast<double>(all_correct) / static_cast<double>(all_total);
  }
  return result;
}

}  // namespace detail

PckResult pck(std::span<const Instance> instances, std::span<const Prediction> predictions,
              std::span<const std::size_t> keypoints_per_class, double alpha) {
  return detail::pck_impl(instances, predictions, keypoints_per_class, alpha, nullptr);
}

std::vector<KeypointAp> apk(std::span<const Detection> detections,
                            std::span<const Instance> ground_truth,
                            std::span<const std::size_t> keypoints_per_class, double alpha,
                            double lambda, unsigned threads) {
  struct Group {
    std::size_t cls;
    std::size_t kp;
  };
  std::set<std::size_t> classes;
  for (const auto& g : ground_truth) classes.insert(g.class_index);
  for (const auto& d : detections) classes.insert(d.class_index);
  std::vector<Group> groups;
  for (std::size_t cls : classes) {
    if (cls >= keypoints_per_class.size()) {
      throw std::invalid_argument("apk: class index " + std::to_string(cls) + " beyond the layout");
    }
    for (std::size_t k = 0; k < keypoints_per_class[cls]; ++k) groups.push_back({cls, k});
  }

  std::vector<KeypointAp> out(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t gi) {
    const auto [cls, kp] = groups[gi];
    struct Target {
      Point2 location;
      double radius;
      bool visible;
      bool matched = false;
    };
    std::map<std::string, std::vector<Target>> targets;
    std::size_t num_gt = 0;
    for (const auto& inst : ground_truth) {
      if (inst.class_index != cls) continue;
      const KeypointAnnotation* a = inst.find_keypoint(kp);
      if (!a) continue;
      targets[inst.image_id].push_back(
          {a->location, alpha * std::max(inst.bbox.w, inst.bbox.h), a->visible});
      if (a->visible) ++num_gt;
    }

    struct Candidate {
      const std::string* image_id;
      Point2 location;
      double score;
    };
    std::vector<Candidate> candidates;
    for (const auto& det : detections) {
      if (det.class_index != cls) continue;
      for (const auto& h : det.keypoint_hypotheses) {
        if (h.id != kp) continue;
        candidates.push_back({&det.image_id, h.location, score_hypothesis(det.score, h.score, lambda)});
      }
    }
    const auto order =
        rank_by_score(candidates.size(), [&](std::size_t i) { return candidates[i].score; });

    std::vector<bool> is_tp;
    is_tp.reserve(order.size());
    for (std::size_t i : order) {
      const Candidate& c = candidates[i];
      auto it = targets.find(*c.image_id);
      if (it == targets.end()) {
        is_tp.push_back(false);
        continue;
      }
      Target* best = nullptr;
      double best_distance = std::numeric_limits<double>::infinity();
      bool near_invisible = false;
      for (Target& t : it->second) {
        const double d = distance(c.location, t.location);
        if (d > t.radius) continue;
        if (!t.visible) {
          near_invisible = true;
          continue;
        }
        if (!t.matched && d < best_distance) {
          best_distance = d;
          best = &t;
        }
      }
      if (best) {
        best->matched = true;
        is_tp.push_back(true);
      } else if (!near_invisible) {
        is_tp.push_back(false);
      }
    }

    KeypointAp r;
    r.class_index = cls;
    r.keypoint_id = kp;
    r.num_gt = num_gt;
    r.curve = pr_curve(is_tp, num_gt);
    r.ap = num_gt == 0 ? 0.0 : voc_ap(r.curve.recall, r.curve.precision);
    out[gi] = std::move(r);
  });
  return out;
}

double score_hypothesis(double det_score, double kp_log_likelihood, double lambda) {
  return lambda * det_score + (1.0 - lambda) * kp_log_likelihood;
}

}  // namespace vkp
