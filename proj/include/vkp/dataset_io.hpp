#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vkp/keypoint_fusion.hpp"
#include "vkp/metrics.hpp"
#include "vkp/records.hpp"
#include "vkp/report.hpp"

namespace vkp {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kEulerConvention = "ZYX";
inline constexpr std::uint32_t kResponseMapVersion = 1;

/// Base for malformed or inconsistent dataset content.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Text that does not parse.
class ParseError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
/// Parsed content that breaks a type invariant.
class ValidationError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
/// Unknown schema version or angle convention.
class VersionError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
/// File system failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassInfo {
  std::string name;
  std::vector<std::string> keypoints;
  /// Lateral keypoint pairs (left, right); unlisted keypoints are self-paired.
  std::vector<std::pair<std::size_t, std::size_t>> symmetry_pairs;

  friend bool operator==(const ClassInfo&, const ClassInfo&) = default;
};

struct Manifest {
  int schema_version = kSchemaVersion;
  std::string euler_convention = kEulerConvention;
  std::size_t viewpoint_bins = 21;
  std::vector<ClassInfo> classes;
  /// Class names left out of viewpoint diagnostics.
  std::vector<std::string> excluded_classes = {"diningtable", "bottle"};

  std::vector<std::size_t> keypoints_per_class() const;
  SymmetryMap symmetry() const;
  std::set<std::size_t> excluded_indices() const;
  std::optional<std::size_t> class_index(const std::string& name) const;
  const std::string& class_name(std::size_t index) const;

  /// Throws VersionError or ValidationError.
  void validate() const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Fine (12×12) and coarse (6×6) response stacks for one crop, one channel
/// per keypoint of the class.
struct RecordMaps {
  std::vector<ResponseMap> fine;
  std::vector<ResponseMap> coarse;

  friend bool operator==(const RecordMaps&, const RecordMaps&) = default;
};

struct Dataset {
  Manifest manifest;
  std::vector<Instance> instances;
  std::vector<Prediction> predictions;
  std::vector<Detection> detections;
  /// Record id (instance or detection) -> response maps.
  std::map<std::string, RecordMaps> maps;
  /// One bank per class that has prior data, ascending class index.
  std::vector<PriorBank> priors;

  const PriorBank* prior_for(std::size_t class_index) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/**
 * Dataset directory layout:
 *
 *   manifest.json        schema version, angle convention, classes, keypoints
 *   annotations.jsonl    one Instance per line
 *   predictions.jsonl    one Prediction per line (optional)
 *   detections.jsonl     one Detection per line (optional)
 *   priors.jsonl         one prior-bank entry per line (optional)
 *   maps/<id>.fine.vkrm, maps/<id>.coarse.vkrm   response stacks (optional)
 *
 * Everything is validated on load; errors name the offending file and record.
 */
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

Manifest load_manifest(const std::filesystem::path& path);

std::vector<Prediction> load_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);

std::vector<Detection> load_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, std::span<const Detection> detections);

/// Prior banks from a priors.jsonl file, one per class present.
std::vector<PriorBank> load_prior_banks(const std::filesystem::path& path, const Manifest& manifest);

/// Response stacks from a maps directory, checked against the records of
/// `dataset` (instances and detections).
std::map<std::string, RecordMaps> load_maps_directory(const std::filesystem::path& dir,
                                                      const Dataset& dataset);

/// Checks predictions against the manifest and the instance set.
void validate_predictions(const Manifest& manifest, std::span<const Instance> instances,
                          std::span<const Prediction> predictions);

/**
 * Response stack binary format (little-endian):
 *
 *   char[4]  magic "VKRM"
 *   u32      version (1)
 *   u32      class id
 *   u32      keypoint count K
 *   u32      H
 *   u32      W
 *   f32[K·H·W] row-major values, channel-major
 */
std::vector<ResponseMap> read_response_maps(const std::filesystem::path& path);
void write_response_maps(const std::filesystem::path& path, std::span<const ResponseMap> maps);

enum class ReportFormat { kTable, kJson };

/// Deterministic rendering; numbers at 6 significant digits.
std::string format_report(const EvalReport& report, ReportFormat format);
void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace vkp
