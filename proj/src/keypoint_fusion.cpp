#include "vkp/keypoint_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vkp {
namespace {

constexpr double kGrid = static_cast<double>(kGridSize);
constexpr double kGridUpper = kGrid - 1e-9;

void require_shape(const Grid& g, std::size_t rows, std::size_t cols, const char* what) {
  if (g.rows() != rows || g.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " grid, got " + std::to_string(g.rows()) +
                                "x" + std::to_string(g.cols()));
  }
}

// Index of the receptive center nearest to `coord` along one axis; halfway
// points go to the lower index.
std::size_t nearest_center(double coord, double stride, std::size_t n) {
  const double idx = std::ceil(coord / stride - 0.5);
  if (!(idx > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(idx), n - 1);
}

double bilinear_coordinate(std::size_t fine_index, std::size_t coarse_n, std::size_t* lo,
                           std::size_t* hi) {
  const double u = std::clamp((static_cast<double>(fine_index) + 0.5) / 2.0 - 0.5, 0.0,
                              static_cast<double>(coarse_n - 1));
  *lo = static_cast<std::size_t>(u);
  *hi = std::min(*lo + 1, coarse_n - 1);
  return u - static_cast<double>(*lo);
}

}  // namespace

void ResponseMap::validate() const {
  const bool ok_shape = (grid.rows() == kGridSize && grid.cols() == kGridSize) ||
                        (grid.rows() == kCoarseGridSize && grid.cols() == kCoarseGridSize);
  if (!ok_shape) {
    throw std::invalid_argument("ResponseMap: grid must be 6x6 or 12x12, got " +
                                std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()));
  }
  for (double v : grid.data()) {
    if (!std::isfinite(v)) throw std::invalid_argument("ResponseMap: non-finite entry");
  }
}

void PriorBank::validate() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (const auto& kp : entries[i].keypoints) {
      if (!kp) continue;
      const bool inside = kp->x >= 0.0 && kp->x < kGrid && kp->y >= 0.0 && kp->y < kGrid;
      if (!inside) {
        throw std::invalid_argument("PriorBank: entry " + std::to_string(i) +
                                    " has a keypoint outside [0, 12)");
      }
    }
  }
}

Point2 receptive_center(std::size_t row, std::size_t col, double stride) {
  return {stride * static_cast<double>(col), stride * static_cast<double>(row)};
}

std::vector<Grid> target_response_map(std::span<const std::optional<Point2>> keypoints,
                                      std::size_t rows, std::size_t cols, double stride) {
  std::vector<Grid> out;
  out.reserve(keypoints.size());
  for (const auto& kp : keypoints) {
    Grid g(rows, cols, 0.0);
    if (kp) g(nearest_center(kp->y, stride, rows), nearest_center(kp->x, stride, cols)) = 1.0;
    out.push_back(std::move(g));
  }
  return out;
}

Grid upsample_coarse(const Grid& coarse, UpsampleMode mode) {
  require_shape(coarse, kCoarseGridSize, kCoarseGridSize, "upsample_coarse");
  Grid fine(kGridSize, kGridSize);
  for (std::size_t i = 0; i < kGridSize; ++i) {
    for (std::size_t j = 0; j < kGridSize; ++j) {
      if (mode == UpsampleMode::kNearest) {
        fine(i, j) = coarse(i / 2, j / 2);
        continue;
      }
      std::size_t r0, r1, c0, c1;
      const double tr = bilinear_coordinate(i, kCoarseGridSize, &r0, &r1);
      const double tc = bilinear_coordinate(j, kCoarseGridSize, &c0, &c1);
      const double top = (1.0 - tc) * coarse(r0, c0) + tc * coarse(r0, c1);
      const double bottom = (1.0 - tc) * coarse(r1, c0) + tc * coarse(r1, c1);
      fine(i, j) = (1.0 - tr) * top + tr * bottom;
    }
  }
  return fine;
}

Grid combine_scales(const Grid& fine, const Grid& coarse, double w_fine, double w_coarse,
                    UpsampleMode mode) {
  require_shape(fine, kGridSize, kGridSize, "combine_scales");
  if (!std::isfinite(w_fine) || !std::isfinite(w_coarse)) {
    throw std::invalid_argument("combine_scales: weights must be finite");
  }
  const Grid up = upsample_coarse(coarse, mode);
  Grid out(kGridSize, kGridSize);
  auto o = out.data();
  auto f = fine.data();
  auto c = up.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] = w_fine * f[k] + w_coarse * c[k];
  return out;
}

Point2 normalize_keypoint(const Box& box, const Point2& p) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw std::invalid_argument("normalize_keypoint: degenerate box");
  }
  return {std::clamp((p.x - box.x) / box.w * kGrid, 0.0, kGridUpper),
          std::clamp((p.y - box.y) / box.h * kGrid, 0.0, kGridUpper)};
}

Point2 denormalize_keypoint(const Box& box, const Point2& g) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw std::invalid_argument("denormalize_keypoint: degenerate box");
  }
  return {box.x + g.x / kGrid * box.w, box.y + g.y / kGrid * box.h};
}

std::vector<std::size_t> neighbor_set(const RotationMatrix& r, const PriorBank& bank,
                                      double threshold) {
  if (bank.entries.empty()) throw std::invalid_argument("neighbor_set: empty prior bank");
  std::vector<std::size_t> out;
  std::size_t nearest = 0;
  double nearest_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    const double d = geodesic_distance(r, bank.entries[i].rotation);
    if (d < threshold) out.push_back(i);
    if (d < nearest_distance) {
      nearest_distance = d;
      nearest = i;
    }
  }
  if (out.empty()) out.push_back(nearest);
  return out;
}

std::optional<Grid> pose_prior(const PriorBank& bank, std::span<const std::size_t> neighbors,
                               std::size_t keypoint_id, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("pose_prior: sigma must be positive");
  Grid prior(kGridSize, kGridSize, 0.0);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::size_t support = 0;
  double gx[kGridSize];
  double gy[kGridSize];
  for (std::size_t n : neighbors) {
    const auto& kps = bank.entries.at(n).keypoints;
    if (keypoint_id >= kps.size() || !kps[keypoint_id]) continue;
    const Point2 mean = *kps[keypoint_id];
    ++support;
    // The isotropic Gaussian factorizes over rows and columns.
    for (std::size_t k = 0; k < kGridSize; ++k) {
      const double c = static_cast<double>(k) + 0.5;
      gx[k] = std::exp(-(c - mean.x) * (c - mean.x) * inv_two_var);
      gy[k] = std::exp(-(c - mean.y) * (c - mean.y) * inv_two_var);
    }
    for (std::size_t i = 0; i < kGridSize; ++i) {
      for (std::size_t j = 0; j < kGridSize; ++j) prior(i, j) += gy[i] * gx[j];
    }
  }
  if (support == 0) return std::nullopt;
  const double scale = 1.0 / (2.0 * kPi * sigma * sigma) / static_cast<double>(support);
  for (double& v : prior.data()) v = std::max(v * scale, kPriorFloor);
  return prior;
}

std::optional<Grid> pose_prior(const RotationMatrix& r, const PriorBank& bank,
                               std::size_t keypoint_id, double sigma) {
  const auto neighbors = neighbor_set(r, bank);
  return pose_prior(bank, neighbors, keypoint_id, sigma);
}

DecodedKeypoint fuse_and_decode(const Grid& prior, const Grid& log_likelihood) {
  require_shape(prior, kGridSize, kGridSize, "fuse_and_decode prior");
  require_shape(log_likelihood, kGridSize, kGridSize, "fuse_and_decode likelihood");
  std::size_t best_row = 0, best_col = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kGridSize; ++i) {
    for (std::size_t j = 0; j < kGridSize; ++j) {
      const double s = std::log(std::max(prior(i, j), kPriorFloor)) + log_likelihood(i, j);
      if (s > best) {
        best = s;
        best_row = i;
        best_col = j;
      }
    }
  }
  return {{static_cast<double>(best_col) + 0.5, static_cast<double>(best_row) + 0.5}, best};
}

std::vector<DecodedKeypoint> decode_keypoints(std::span<const ResponseMap> fine,
                                              std::span<const ResponseMap> coarse,
                                              const RotationMatrix& viewpoint, const Box& box,
                                              const PriorBank* bank, const FusionOptions& options) {
  if (fine.size() != coarse.size()) {
    throw std::invalid_argument("decode_keypoints: fine and coarse channel counts differ");
  }
  const bool with_prior = options.use_prior && bank != nullptr && !bank->entries.empty();
  std::vector<std::size_t> neighbors;
  if (with_prior) neighbors = neighbor_set(viewpoint, *bank, options.neighbor_threshold);

  const Grid uniform(kGridSize, kGridSize, 1.0 / static_cast<double>(kGridSize * kGridSize));
  std::vector<DecodedKeypoint> out;
  out.reserve(fine.size());
  for (std::size_t k = 0; k < fine.size(); ++k) {
    const Grid likelihood = combine_scales(fine[k].grid, coarse[k].grid, options.w_fine,
                                           options.w_coarse, options.upsample);
    std::optional<Grid> prior;
    if (with_prior) prior = pose_prior(*bank, neighbors, fine[k].keypoint_id, options.sigma);
    DecodedKeypoint d = fuse_and_decode(prior ? *prior : uniform, likelihood);
    d.location = denormalize_keypoint(box, d.location);
    out.push_back(d);
  }
  return out;
}

}  // namespace vkp
