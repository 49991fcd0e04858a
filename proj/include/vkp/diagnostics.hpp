#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vkp/metrics.hpp"
#include "vkp/records.hpp"
#include "vkp/report.hpp"

namespace vkp {

/// Azimuth error thresholds of the error-mode table.
inline constexpr double kErrorModeSmall = kPi / 9.0;
inline constexpr double kErrorModeMedium = 2.0 * kPi / 9.0;

/// Instance indices by bounding-box area terciles.
struct SizeSlices {
  std::vector<std::size_t> small;
  std::vector<std::size_t> medium;
  std::vector<std::size_t> large;
};

/// Sort by area (ties by instance id); bottom ⌊n/3⌋ small, top ⌊n/3⌋ large,
/// the rest medium. Throws std::invalid_argument for fewer than 3 instances.
SizeSlices size_slices(std::span<const Instance> instances);

enum class ErrorMode : std::size_t { kCorrect = 0, kMedium, kPiFlip, kZRef, kOther };
inline constexpr std::size_t kNumErrorModes = 5;

const char* error_mode_name(ErrorMode mode);

struct ErrorModeTally {
  std::array<std::size_t, kNumErrorModes> counts{};

  std::size_t total() const;
  /// Share of the tally in percent; 0 for an empty tally.
  double percentage(ErrorMode mode) const;
};

struct AzimuthPair {
  double gt = 0.0;
  double pred = 0.0;
};

/// First matching category in order: error < π/9; error < 2π/9; flipped
/// error < π/9; reflected error < π/9; other.
ErrorMode classify_error_mode(double azimuth_gt, double azimuth_pred);

/// Throws std::invalid_argument on an empty list.
ErrorModeTally error_mode_decomposition(std::span<const AzimuthPair> pairs);

/// Throws std::invalid_argument unless every class map is an involution.
void validate_symmetry(const SymmetryMap& partners);

/// PCK where a prediction also counts if it lands on the laterally mirrored
/// keypoint's annotation of the same instance.
PckResult left_right_pck(std::span<const Instance> instances, std::span<const Prediction> predictions,
                         std::span<const std::size_t> keypoints_per_class,
                         const SymmetryMap& partners, double alpha = kDefaultAlpha);

struct SliceSpec {
  std::string name;
  std::function<bool(const Instance&)> predicate;
};

/// "small", "medium", "large" slices computed over `instances`.
std::vector<SliceSpec> size_slice_specs(std::span<const Instance> instances);
/// "occluded" (occluded or truncated) and "unoccluded".
std::vector<SliceSpec> occlusion_slice_specs();

using SliceMetric = std::function<EvalReport(std::span<const Instance>)>;

/// Runs `metric` on each slice after dropping instances of excluded classes.
/// Empty slices are reported with a null report.
std::vector<SliceReport> sliced_report(const SliceMetric& metric, std::span<const Instance> instances,
                                       std::span<const SliceSpec> slices,
                                       const std::set<std::size_t>& excluded_classes = {});

}  // namespace vkp
