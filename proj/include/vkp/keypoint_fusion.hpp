#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vkp/geometry.hpp"
#include "vkp/so3.hpp"

namespace vkp {

/// Side of the normalized object crop, in grid cells.
inline constexpr std::size_t kGridSize = 12;
inline constexpr std::size_t kCoarseGridSize = 6;
/// Pixel stride between receptive-field centers of the fine network.
inline constexpr double kDefaultStride = 32.0;
inline constexpr double kDefaultPriorSigma = 2.0;
inline constexpr double kDefaultNeighborThreshold = kPi / 6.0;
/// Lower clamp applied to prior grids before taking logs.
inline constexpr double kPriorFloor = 1e-12;

/// One keypoint channel of an appearance response (6×6 or 12×12), treated as
/// a log-likelihood up to an additive constant.
struct ResponseMap {
  std::size_t class_index = 0;
  std::size_t keypoint_id = 0;
  Grid grid;

  /// Throws std::invalid_argument unless the grid is 6×6 or 12×12 and finite.
  void validate() const;
  friend bool operator==(const ResponseMap&, const ResponseMap&) = default;
};

/// Training instance for the viewpoint-conditioned prior: its rotation plus
/// keypoints in normalized grid coordinates, indexed by keypoint id
/// (nullopt = not annotated).
struct PriorEntry {
  RotationMatrix rotation;
  std::vector<std::optional<Point2>> keypoints;

  friend bool operator==(const PriorEntry&, const PriorEntry&) = default;
};

struct PriorBank {
  std::size_t class_index = 0;
  std::vector<PriorEntry> entries;

  /// Throws std::invalid_argument if any stored coordinate leaves [0, 12).
  void validate() const;
  friend bool operator==(const PriorBank&, const PriorBank&) = default;
};

enum class UpsampleMode { kNearest, kBilinear };

/// Location of a decoded keypoint plus the fused score log P + L at it.
struct DecodedKeypoint {
  Point2 location;
  double score = 0.0;
};

Point2 receptive_center(std::size_t row, std::size_t col, double stride = kDefaultStride);

/// One grid per keypoint: 1 at the cell whose receptive center is nearest to
/// the keypoint, 0 elsewhere. Missing keypoints give an all-zero channel.
std::vector<Grid> target_response_map(std::span<const std::optional<Point2>> keypoints,
                                      std::size_t rows, std::size_t cols,
                                      double stride = kDefaultStride);

Grid upsample_coarse(const Grid& coarse, UpsampleMode mode = UpsampleMode::kNearest);

/// w_fine·fine + w_coarse·upsample(coarse).
Grid combine_scales(const Grid& fine, const Grid& coarse, double w_fine, double w_coarse,
                    UpsampleMode mode = UpsampleMode::kNearest);

/// Pixel → normalized 12×12 crop coordinates, clamped to [0, 12 − 1e-9].
Point2 normalize_keypoint(const Box& box, const Point2& p);
Point2 denormalize_keypoint(const Box& box, const Point2& g);

/// Bank entries with geodesic distance to `r` below `threshold`. Falls back
/// to the single nearest entry when none qualifies.
std::vector<std::size_t> neighbor_set(const RotationMatrix& r, const PriorBank& bank,
                                      double threshold = kDefaultNeighborThreshold);

/**
 * Mixture-of-Gaussians prior over the 12×12 grid for one keypoint.
 *
 * Each neighbour annotating the keypoint contributes an isotropic Gaussian
 * (standard deviation `sigma` cells) evaluated at cell centers (j + 0.5, i + 0.5);
 * the mixture is averaged over those neighbours and clamped below at
 * kPriorFloor. Returns nullopt when no neighbour annotates the keypoint.
 */
std::optional<Grid> pose_prior(const RotationMatrix& r, const PriorBank& bank,
                               std::size_t keypoint_id, double sigma = kDefaultPriorSigma);
std::optional<Grid> pose_prior(const PriorBank& bank, std::span<const std::size_t> neighbors,
                               std::size_t keypoint_id, double sigma = kDefaultPriorSigma);

/// Argmax of log(prior) + log_likelihood over cells, first in row-major order
/// on ties. Location is the winning cell center in grid coordinates.
DecodedKeypoint fuse_and_decode(const Grid& prior, const Grid& log_likelihood);

struct FusionOptions {
  double w_fine = 0.5;
  double w_coarse = 0.5;
  double sigma = kDefaultPriorSigma;
  double neighbor_threshold = kDefaultNeighborThreshold;
  UpsampleMode upsample = UpsampleMode::kNearest;
  /// false decodes from appearance alone (uniform prior).
  bool use_prior = true;
};

/// Full per-crop decode: combine scales, build the viewpoint-conditioned
/// prior for every channel and return keypoints in pixel coordinates.
/// `fine` and `coarse` must hold the same number of channels.
std::vector<DecodedKeypoint> decode_keypoints(std::span<const ResponseMap> fine,
                                              std::span<const ResponseMap> coarse,
                                              const RotationMatrix& viewpoint, const Box& box,
                                              const PriorBank* bank, const FusionOptions& options);

}  // namespace vkp
