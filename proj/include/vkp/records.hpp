#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vkp/geometry.hpp"
#include "vkp/so3.hpp"

namespace vkp {

struct KeypointAnnotation {
  std::size_t id = 0;
  Point2 location;
  bool visible = true;

  friend bool operator==(const KeypointAnnotation&, const KeypointAnnotation&) = default;
};

/// Ground-truth object annotation.
struct Instance {
  std::string id;
  std::string image_id;
  std::size_t class_index = 0;
  Box bbox;
  bool occluded = false;
  bool truncated = false;
  std::optional<EulerAngles> viewpoint;
  std::vector<KeypointAnnotation> keypoints;

  /// Throws std::invalid_argument naming the instance on w ≤ 0, h ≤ 0 or
  /// non-finite coordinates.
  void validate() const;
  const KeypointAnnotation* find_keypoint(std::size_t keypoint_id) const;

  friend bool operator==(const Instance&, const Instance&) = default;
};

/// A scored keypoint location. For detections the score is the keypoint
/// log-likelihood; the detector score is mixed in at evaluation time.
struct KeypointHypothesis {
  std::size_t id = 0;
  Point2 location;
  double score = 0.0;

  friend bool operator==(const KeypointHypothesis&, const KeypointHypothesis&) = default;
};

/// Scored detection candidate (detection setting).
struct Detection {
  std::string id;
  std::string image_id;
  std::size_t class_index = 0;
  Box bbox;
  double score = 0.0;
  std::optional<EulerAngles> viewpoint;
  std::vector<KeypointHypothesis> keypoint_hypotheses;

  void validate() const;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Prediction for an annotated instance with a known box.
struct Prediction {
  std::string instance_id;
  std::optional<EulerAngles> viewpoint;
  /// Raw N_c·N_a·N_θ viewpoint scores; decoded when `viewpoint` is absent.
  std::vector<double> viewpoint_scores;
  std::vector<KeypointHypothesis> keypoints;

  void validate() const;
  const KeypointHypothesis* find_keypoint(std::size_t keypoint_id) const;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

}  // namespace vkp
