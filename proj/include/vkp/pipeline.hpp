#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vkp/dataset_io.hpp"
#include "vkp/diagnostics.hpp"
#include "vkp/keypoint_fusion.hpp"
#include "vkp/report.hpp"

namespace vkp {

struct FuseConfig {
  FusionOptions fusion;
  unsigned threads = 1;
};

struct FuseResult {
  std::vector<Prediction> predictions;
  std::vector<Detection> detections;
};

/// Re-decodes keypoints of every prediction and detection that has response
/// maps. The conditioning viewpoint is the record's viewpoint, else the
/// decoded viewpoint scores; a record with neither is decoded appearance-only.
/// Records without maps are passed through unchanged.
FuseResult fuse_dataset(const Dataset& dataset, const FuseConfig& config);

/// Rotation of a prediction: explicit viewpoint, else decoded scores.
std::optional<EulerAngles> prediction_viewpoint(const Prediction& p, const Manifest& manifest,
                                                std::size_t class_index);

struct ViewpointEvalConfig {
  double theta = kDefaultAccuracyTheta;
  /// true: detection setting (AVP family); false: known boxes (MedErr, Acc).
  bool detections = false;
  std::vector<std::size_t> avp_bins = {4, 8, 16, 24};
  AvpOptions avp;
};

/// Known-box metrics use `dataset.predictions`; detection metrics use
/// `dataset.detections`.
EvalReport evaluate_viewpoint(const Dataset& dataset, const ViewpointEvalConfig& config);

enum class KeypointMode { kPck, kApk };

struct KeypointEvalConfig {
  KeypointMode mode = KeypointMode::kPck;
  double alpha = kDefaultAlpha;
  double lambda = kDefaultLambda;
  unsigned threads = 1;
};

EvalReport evaluate_keypoints(const Dataset& dataset, const KeypointEvalConfig& config);

struct DiagnoseConfig {
  bool size_slices = false;
  bool occlusion_slices = false;
  bool error_modes = false;
  bool left_right = false;
  double alpha = kDefaultAlpha;
  double theta = kDefaultAccuracyTheta;
};

/// Known-box diagnostics. Excluded classes are dropped from error modes and
/// slices.
EvalReport diagnose(const Dataset& dataset, const DiagnoseConfig& config);

}  // namespace vkp
