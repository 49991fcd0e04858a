#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "vkp/dataset_io.hpp"

namespace vkp::synth {

/// Error model applied to generated predictions.
struct NoiseProfile {
  /// Per-axis standard deviation of the axis-angle viewpoint perturbation, radians.
  double viewpoint_jitter = 0.0;
  /// Probability that a predicted viewpoint is rotated by π about Z.
  double pi_flip_prob = 0.0;
  /// Probability that an instance's left/right keypoints are confused.
  double lateral_swap_prob = 0.0;
  /// Per-coordinate standard deviation of predicted keypoints, pixels.
  double keypoint_jitter = 0.0;
  /// Expected number of false-positive detections per instance.
  double false_positive_rate = 0.0;
  /// Standard deviation added to detection scores.
  double score_noise = 0.0;

  /// Throws std::invalid_argument on probabilities outside [0, 1] or
  /// negative / non-finite deviations.
  void validate() const;

  /// Named preset ("zero", "default", "flip10", "lateral") or a comma
  /// separated list of key=value overrides, optionally starting with a
  /// preset name: "flip10,keypoint_jitter=2".
  static NoiseProfile parse(std::string_view spec);
};

/// Scene layout knobs that are not part of the error model.
struct SceneConfig {
  double box_min = 60.0;
  double box_max = 300.0;
  double occlusion_rate = 0.2;
  double truncation_rate = 0.1;
  std::size_t bank_size = 400;
  std::size_t instances_per_image = 3;
  /// Relative height of the mirrored distractor peak in response maps when
  /// lateral confusion is enabled.
  double distractor_ratio = 0.8;
  /// Std dev of the fine response peak in grid cells (coarse uses twice this).
  double map_sigma = 1.0;
  bool with_maps = true;

  void validate() const;
};

/// Rigid 3D keypoint layout of one object class (x forward, y left, z up).
struct ObjectTemplate {
  std::string name;
  std::vector<std::string> keypoint_names;
  std::vector<Eigen::Vector3d> points;
  std::vector<std::pair<std::size_t, std::size_t>> symmetry_pairs;
};

const std::vector<ObjectTemplate>& object_templates();

/// Manifest describing object_templates().
Manifest synthetic_manifest();

/// Orthographic projection of a template point into normalized 12×12 crop
/// coordinates under `rotation`. The camera looks along −X with Z up.
Point2 project_to_grid(const ObjectTemplate& tmpl, std::size_t keypoint, const RotationMatrix& rotation);

/**
 * Deterministic synthetic dataset: ground truth, known-box predictions,
 * detections, response maps and prior banks.
 *
 * Ground-truth keypoints are orthographic projections of the class template
 * under the sampled viewpoint. Predicted keypoints are ground truth plus
 * Gaussian jitter (optionally left/right swapped); response maps peak at the
 * same jittered locations. All randomness derives from `seed`.
 */
Dataset generate_scene(std::uint64_t seed, std::size_t n_instances, const NoiseProfile& profile,
                       const SceneConfig& scene = {});

}  // namespace vkp::synth
