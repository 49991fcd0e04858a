#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vkp/metrics.hpp"

namespace vkp {

/// A reported number; nullopt is written as "absent".
using ReportValue = std::optional<double>;

struct EvalReport;

/// Metric results on one slice of the data; `report` is null when the slice
/// selected no instances.
struct SliceReport {
  std::string name;
  std::shared_ptr<const EvalReport> report;
};

/// Evaluation tables. All maps are ordered so serialization is deterministic.
struct EvalReport {
  std::string title;
  /// metric -> value
  std::map<std::string, ReportValue> summary;
  /// class name -> metric -> value
  std::map<std::string, std::map<std::string, ReportValue>> per_class;
  /// class name -> metric -> value per keypoint id
  std::map<std::string, std::map<std::string, std::vector<ReportValue>>> per_keypoint;
  /// "class/metric" -> precision-recall curve
  std::map<std::string, PrCurve> curves;
  std::vector<SliceReport> slices;
};

}  // namespace vkp
