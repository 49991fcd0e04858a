#include "vkp/viewpoint_codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vkp {

void BinningConfig::validate() const {
  if (num_classes == 0 || num_angles == 0 || num_bins == 0) {
    throw std::invalid_argument("BinningConfig: all dimensions must be positive");
  }
}

ViewpointScores::ViewpointScores(std::vector<double> values, BinningConfig config)
    : values_(std::move(values)), config_(config) {
  config_.validate();
  if (values_.size() != config_.total()) {
    throw std::invalid_argument("ViewpointScores: expected " + std::to_string(config_.total()) +
                                " values, got " + std::to_string(values_.size()));
  }
}

std::size_t angle_to_bin(double angle, std::size_t n_bins) {
  if (n_bins == 0) throw std::invalid_argument("angle_to_bin: n_bins must be positive");
  const double width = kTwoPi / static_cast<double>(n_bins);
  const auto bin = static_cast<std::size_t>(std::llround(wrap_two_pi(angle) / width));
  return bin % n_bins;
}

double bin_center(std::size_t bin, std::size_t n_bins) {
  if (bin >= n_bins) throw std::out_of_range("bin_center: bin out of range");
  return kTwoPi * static_cast<double>(bin) / static_cast<double>(n_bins);
}

std::size_t output_index(std::size_t class_index, std::size_t angle_slot, std::size_t bin,
                         const BinningConfig& cfg) {
  if (class_index >= cfg.num_classes || angle_slot >= cfg.num_angles || bin >= cfg.num_bins) {
    throw std::out_of_range("output_index: index outside the binning configuration");
  }
  return class_index * (cfg.num_angles * cfg.num_bins) + angle_slot * cfg.num_bins + bin;
}

EulerAngles decode_viewpoint(const ViewpointScores& scores, std::size_t class_index) {
  const BinningConfig& cfg = scores.config();
  if (class_index >= cfg.num_classes) throw std::out_of_range("decode_viewpoint: class out of range");
  const auto values = scores.values();
  std::array<double, 3> angles{0.0, 0.0, 0.0};
  for (std::size_t slot = 0; slot < std::min<std::size_t>(cfg.num_angles, 3); ++slot) {
    const std::size_t base = output_index(class_index, slot, 0, cfg);
    std::size_t best = 0;
    for (std::size_t b = 1; b < cfg.num_bins; ++b) {
      if (values[base + b] > values[base + best]) best = b;
    }
    angles[slot] = bin_center(best, cfg.num_bins);
  }
  return {angles[0], angles[1], angles[2]};
}

}  // namespace vkp
