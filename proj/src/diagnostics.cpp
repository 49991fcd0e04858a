#include "vkp/diagnostics.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace vkp {

SizeSlices size_slices(std::span<const Instance> instances) {
  const std::size_t n = instances.size();
  if (n < 3) throw std::invalid_argument("size_slices: need at least 3 instances");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double aa = instances[a].bbox.area(), ab = instances[b].bbox.area();
    if (aa != ab) return aa < ab;
    if (instances[a].id != instances[b].id) return instances[a].id < instances[b].id;
    return a < b;
  });
  const std::size_t third = n / 3;
  SizeSlices s;
  s.small.assign(order.begin(), order.begin() + third);
  s.medium.assign(order.begin() + third, order.end() - third);
  s.large.assign(order.end() - third, order.end());
  return s;
}

const char* error_mode_name(ErrorMode mode) {
  switch (mode) {
    case ErrorMode::kCorrect: return "correct";
    case ErrorMode::kMedium: return "medium";
    case ErrorMode::kPiFlip: return "pi_flip";
    case ErrorMode::kZRef: return "z_ref";
    case ErrorMode::kOther: return "other";
  }
  return "unknown";
}

std::size_t ErrorModeTally::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

double ErrorModeTally::percentage(ErrorMode mode) const {
  const std::size_t t = total();
  if (t == 0) return 0.0;
  return 100.0 * static_cast<double>(counts[static_cast<std::size_t>(mode)]) / static_cast<double>(t);
}

ErrorMode classify_error_mode(double azimuth_gt, double azimuth_pred) {
  const double err = azimuth_distance(azimuth_gt, azimuth_pred);
  if (err < kErrorModeSmall) return ErrorMode::kCorrect;
  if (err < kErrorModeMedium) return ErrorMode::kMedium;
  if (azimuth_distance(azimuth_gt, azimuth_pred + kPi) < kErrorModeSmall) return ErrorMode::kPiFlip;
  if (azimuth_distance(azimuth_gt, z_reflect_azimuth(azimuth_pred)) < kErrorModeSmall) {
    return ErrorMode::kZRef;
  }
  return ErrorMode::kOther;
}

ErrorModeTally error_mode_decomposition(std::span<const AzimuthPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("error_mode_decomposition: empty list");
  ErrorModeTally tally;
  for (const auto& p : pairs) ++tally.counts[static_cast<std::size_t>(classify_error_mode(p.gt, p.pred))];
  return tally;
}

void validate_symmetry(const SymmetryMap& partners) {
  for (std::size_t c = 0; c < partners.size(); ++c) {
    const auto& map = partners[c];
    for (std::size_t k = 0; k < map.size(); ++k) {
      if (map[k] >= map.size() || map[map[k]] != k) {
        throw std::invalid_argument("symmetry map of class " + std::to_string(c) +
                                    " is not an involution at keypoint " + std::to_string(k));
      }
    }
  }
}

PckResult left_right_pck(std::span<const Instance> instances, std::span<const Prediction> predictions,
                         std::span<const std::size_t> keypoints_per_class,
                         const SymmetryMap& partners, double alpha) {
  validate_symmetry(partners);
  return detail::pck_impl(instances, predictions, keypoints_per_class, alpha, &partners);
}

std::vector<SliceSpec> size_slice_specs(std::span<const Instance> instances) {
  const SizeSlices s = size_slices(instances);
  auto make = [&](const char* name, const std::vector<std::size_t>& idx) {
    auto ids = std::make_shared<std::unordered_set<std::string>>();
    for (std::size_t i : idx) ids->insert(instances[i].id);
    return SliceSpec{name, [ids](const Instance& inst) { return ids->contains(inst.id); }};
  };
  return {make("small", s.small), make("medium", s.medium), make("large", s.large)};
}

std::vector<SliceSpec> occlusion_slice_specs() {
  return {
      {"occluded", [](const Instance& i) { return i.occluded || i.truncated; }},
      {"unoccluded", [](const Instance& i) { return !i.occluded && !i.truncated; }},
  };
}

std::vector<SliceReport> sliced_report(const SliceMetric& metric, std::span<const Instance> instances,
                                       std::span<const SliceSpec> slices,
                                       const std::set<std::size_t>& excluded_classes) {
  std::vector<SliceReport> out;
  out.reserve(slices.size());
  for (const auto& spec : slices) {
    std::vector<Instance> subset;
    for (const auto& inst : instances) {
      if (excluded_classes.contains(inst.class_index)) continue;
      if (spec.predicate(inst)) subset.push_back(inst);
    }
    SliceReport r{spec.name, nullptr};
    if (!subset.empty()) {
      EvalReport rep = metric(subset);
      rep.title = spec.name;
      r.report = std::make_shared<const EvalReport>(std::move(rep));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vkp
