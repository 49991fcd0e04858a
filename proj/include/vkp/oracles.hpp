#pragma once

// Brute-force reference implementations used to cross-check the fusion decode
// and AP computation. They intentionally share no arithmetic with the code
// they check.

#include <cstddef>
#include <span>

#include "vkp/geometry.hpp"

namespace vkp::synth {

/// Exhaustive scan of log(max(prior, 1e-12)) + likelihood over a row-major
/// rows×cols grid; returns the first maximal cell's center (col + 0.5, row + 0.5).
Point2 oracle_fuse(std::span<const double> prior, std::span<const double> likelihood,
                   std::size_t rows, std::size_t cols);

struct RankedLabel {
  double score = 0.0;
  bool is_tp = false;
};

/// All-points AP from a scored TP/FP list: every true positive contributes
/// its recall step times the best precision reached at or after its rank.
double oracle_ap(std::span<const RankedLabel> ranking, std::size_t num_gt);

}  // namespace vkp::synth
