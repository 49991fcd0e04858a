#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vkp/so3.hpp"

namespace vkp {

/// Default number of angular bins per angle slot.
inline constexpr std::size_t kDefaultNumBins = 21;

/// Shape of a jointly-predicted viewpoint output: N_c classes × N_a angle
/// slots × N_θ bins, flattened class-major.
struct BinningConfig {
  std::size_t num_classes = 1;
  std::size_t num_angles = 3;
  std::size_t num_bins = kDefaultNumBins;

  std::size_t total() const { return num_classes * num_angles * num_bins; }
  /// Throws std::invalid_argument if any dimension is zero.
  void validate() const;
};

class ViewpointScores {
 public:
  /// Throws std::invalid_argument if `values.size() != config.total()`.
  ViewpointScores(std::vector<double> values, BinningConfig config);

  std::span<const double> values() const { return values_; }
  const BinningConfig& config() const { return config_; }

 private:
  std::vector<double> values_;
  BinningConfig config_;
};

/// Bins are centered on multiples of 2π/n_bins, so bin 0 straddles angle 0.
std::size_t angle_to_bin(double angle, std::size_t n_bins);

/// 2π·bin/n_bins.
double bin_center(std::size_t bin, std::size_t n_bins);

/// class·(N_a·N_θ) + angle_slot·N_θ + bin.
std::size_t output_index(std::size_t class_index, std::size_t angle_slot, std::size_t bin,
                         const BinningConfig& cfg);

/// Per-slot argmax over the class's slice (lowest bin wins ties), returned as
/// bin centers. Slot 0 is azimuth, 1 elevation, 2 cyclorotation; slots past
/// the third are ignored and missing ones decode to 0.
EulerAngles decode_viewpoint(const ViewpointScores& scores, std::size_t class_index);

}  // namespace vkp
