#include "vkp/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace vkp::synth {

Point2 oracle_fuse(std::span<const double> prior, std::span<const double> likelihood,
                   std::size_t rows, std::size_t cols) {
  if (prior.size() != rows * cols || likelihood.size() != rows * cols || rows * cols == 0) {
    throw std::invalid_argument("oracle_fuse: size mismatch");
  }
  std::size_t winner = 0;
  double top = 0.0;
  for (std::size_t cell = 0; cell < rows * cols; ++cell) {
    const double p = prior[cell] < 1e-12 ? 1e-12 : prior[cell];
    const double value = std::log(p) + likelihood[cell];
    if (cell == 0 || value > top) {
      top = value;
      winner = cell;
    }
  }
  return {static_cast<double>(winner % cols) + 0.5, static_cast<double>(winner / cols) + 0.5};
}

double oracle_ap(std::span<const RankedLabel> ranking, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<RankedLabel> sorted(ranking.begin(), ranking.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const RankedLabel& a, const RankedLabel& b) { return a.score > b.score; });
  const std::size_t n = sorted.size();
  std::vector<std::size_t> hits_through(n);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sorted[i].is_tp) ++hits;
    hits_through[i] = hits;
  }
  const double gt = static_cast<double>(num_gt);
  double ap = 0.0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!sorted[i].is_tp) continue;
    ++seen;
    double best = 0.0;
    for (std::size_t j = i; j < n; ++j) {
      best = std::max(best, static_cast<double>(hits_through[j]) / static_cast<double>(j + 1));
    }
    const double step = static_cast<double>(seen) / gt - static_cast<double>(seen - 1) / gt;
    ap += step * best;
  }
  return ap;
}

}  // namespace vkp::synth
