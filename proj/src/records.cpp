#include "vkp/records.hpp"

#include <cmath>
#include <stdexcept>

namespace vkp {
namespace {

bool finite(const Point2& p) { return std::isfinite(p.x) && std::isfinite(p.y); }
bool finite(const Box& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) && std::isfinite(b.h);
}

void check_box(const Box& b, const std::string& what) {
  if (!finite(b)) throw std::invalid_argument(what + ": non-finite box");
  if (!(b.w > 0.0) || !(b.h > 0.0)) throw std::invalid_argument(what + ": box width and height must be positive");
}

}  // namespace

void Instance::validate() const {
  const std::string what = "instance '" + id + "'";
  check_box(bbox, what);
  for (const auto& kp : keypoints) {
    if (!finite(kp.location)) {
      throw std::invalid_argument(what + ": keypoint " + std::to_string(kp.id) + " has non-finite coordinates");
    }
  }
}

const KeypointAnnotation* Instance::find_keypoint(std::size_t keypoint_id) const {
  for (const auto& kp : keypoints) {
    if (kp.id == keypoint_id) return &kp;
  }
  return nullptr;
}

void Detection::validate() const {
  const std::string what = "detection '" + id + "'";
  check_box(bbox, what);
  if (!std::isfinite(score)) throw std::invalid_argument(what + ": non-finite score");
  for (const auto& h : keypoint_hypotheses) {
    if (!finite(h.location) || !std::isfinite(h.score)) {
      throw std::invalid_argument(what + ": keypoint hypothesis " + std::to_string(h.id) + " is non-finite");
    }
  }
}

void Prediction::validate() const {
  const std::string what = "prediction for '" + instance_id + "'";
  for (double v : viewpoint_scores) {
    if (!std::isfinite(v)) throw std::invalid_argument(what + ": non-finite viewpoint score");
  }
  for (const auto& k : keypoints) {
    if (!finite(k.location) || !std::isfinite(k.score)) {
      throw std::invalid_argument(what + ": keypoint " + std::to_string(k.id) + " is non-finite");
    }
  }
}

const KeypointHypothesis* Prediction::find_keypoint(std::size_t keypoint_id) const {
  for (const auto& k : keypoints) {
    if (k.id == keypoint_id) return &k;
  }
  return nullptr;
}

}  // namespace vkp
