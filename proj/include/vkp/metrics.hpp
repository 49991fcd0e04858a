#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "vkp/geometry.hpp"
#include "vkp/records.hpp"
#include "vkp/so3.hpp"

namespace vkp {

inline constexpr double kDefaultAccuracyTheta = kPi / 6.0;
inline constexpr double kDefaultAlpha = 0.1;
inline constexpr double kDefaultLambda = 0.5;
inline constexpr double kDefaultIouThreshold = 0.5;

struct RotationPair {
  RotationMatrix gt;
  RotationMatrix pred;
};

/// Median geodesic error in degrees; mean of the two central values for even
/// counts. Throws std::invalid_argument on an empty list.
double median_error(std::span<const RotationPair> pairs);

/// Fraction of pairs with geodesic error strictly below theta.
double accuracy_at(std::span<const RotationPair> pairs, double theta = kDefaultAccuracyTheta);

double iou(const Box& a, const Box& b);

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

/// Precision/recall after each entry of a score-sorted TP/FP sequence.
PrCurve pr_curve(const std::vector<bool>& ranked_is_tp, std::size_t num_gt);

/// All-points interpolated AP: the precision envelope is made nonincreasing
/// from the right and integrated over recall steps.
double voc_ap(std::span<const double> recalls, std::span<const double> precisions);

struct ClassAp {
  std::size_t class_index = 0;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  double ap = 0.0;
  PrCurve curve;
  /// Set when the class has no ground truth; `ap` is then 0.
  bool no_ground_truth = false;
};

struct AvpOptions {
  double iou_threshold = kDefaultIouThreshold;
  /// A localization match consumes the ground truth even when the viewpoint
  /// test fails (the detection is still a false positive).
  bool consume_on_wrong_viewpoint = true;
};

/// Viewpoint correctness test applied to a localized match; an empty function
/// means localization only.
using ViewpointTest = std::function<bool(const EulerAngles& gt, const EulerAngles& pred)>;

/// Greedy per-class matching in descending score order, one AP per class
/// present in either input (ascending class index).
std::vector<ClassAp> viewpoint_ap(std::span<const Detection> detections,
                                  std::span<const Instance> ground_truth, const ViewpointTest& test,
                                  const AvpOptions& options = {});

/// Correct iff azimuth bins agree.
std::vector<ClassAp> avp(std::span<const Detection> detections,
                         std::span<const Instance> ground_truth, std::size_t n_bins,
                         const AvpOptions& options = {});
/// Correct iff azimuth error < theta.
std::vector<ClassAp> avp_theta(std::span<const Detection> detections,
                               std::span<const Instance> ground_truth, double theta,
                               const AvpOptions& options = {});
/// Correct iff geodesic rotation error < theta.
std::vector<ClassAp> arp_theta(std::span<const Detection> detections,
                               std::span<const Instance> ground_truth, double theta,
                               const AvpOptions& options = {});

struct ClassPck {
  std::size_t class_index = 0;
  /// Fraction per keypoint id; nullopt where the keypoint is never annotated.
  std::vector<std::optional<double>> per_keypoint;
  /// Mean over annotated keypoints.
  std::optional<double> mean;
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct PckResult {
  std::vector<ClassPck> classes;
  /// Mean of per-class means.
  std::optional<double> mean_over_classes;
  /// Correct / total over every evaluated keypoint-instance.
  std::optional<double> pooled;
};

/// Lateral partner of each keypoint id, per class: partners[c][k].
using SymmetryMap = std::vector<std::vector<std::size_t>>;

/// PCK on visible annotated keypoints: correct iff the prediction lies within
/// alpha·max(h, w) of the annotation. Throws std::invalid_argument if an
/// evaluated instance has no prediction.
PckResult pck(std::span<const Instance> instances, std::span<const Prediction> predictions,
              std::span<const std::size_t> keypoints_per_class, double alpha = kDefaultAlpha);

struct KeypointAp {
  std::size_t class_index = 0;
  std::size_t keypoint_id = 0;
  std::size_t num_gt = 0;
  double ap = 0.0;
  PrCurve curve;
};

/**
 * APK per (class, keypoint id). Hypotheses of all detections of a class are
 * pooled, ranked by score_hypothesis(detection score, keypoint score, lambda)
 * and greedily assigned to the nearest unmatched visible ground-truth keypoint
 * of the same type in the same image within alpha·max(h, w) of that
 * ground-truth box. A hypothesis that only falls near an invisible annotation
 * is ignored; everything else unmatched is a false positive.
 */
std::vector<KeypointAp> apk(std::span<const Detection> detections,
                            std::span<const Instance> ground_truth,
                            std::span<const std::size_t> keypoints_per_class,
                            double alpha = kDefaultAlpha, double lambda = kDefaultLambda,
                            unsigned threads = 1);

/// lambda·det_score + (1 − lambda)·kp_log_likelihood.
double score_hypothesis(double det_score, double kp_log_likelihood, double lambda = kDefaultLambda);

namespace detail {
/// PCK where a prediction may also match the partner keypoint's annotation.
PckResult pck_impl(std::span<const Instance> instances, std::span<const Prediction> predictions,
                   std::span<const std::size_t> keypoints_per_class, double alpha,
                   const SymmetryMap* partners);
}  // namespace detail

}  // namespace vkp
