#include "vkp/dataset_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace vkp {
namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'V', 'K', 'R', 'M'};
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kAnnotationsFile = "annotations.jsonl";
constexpr const char* kPredictionsFile = "predictions.jsonl";
constexpr const char* kDetectionsFile = "detections.jsonl";
constexpr const char* kPriorsFile = "priors.jsonl";
constexpr const char* kMapsDir = "maps";
constexpr const char* kFineSuffix = ".fine.vkrm";
constexpr const char* kCoarseSuffix = ".coarse.vkrm";

// ---------------------------------------------------------------------------
// file helpers

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

// Calls fn(record, location) for every nonempty line of a JSONL file.
template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn fn) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    auto located = [&](const char* what) {
      const std::string msg(what);
      return msg.starts_with(where) ? msg : where + ": " + msg;
    };
    try {
      fn(record, where);
    } catch (const ParseError& e) {
      throw ParseError(located(e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(located(e.what()));
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// JSON field helpers

double number(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw ParseError(std::string("field '") + key + "' is not a number");
  return v.get<double>();
}

std::size_t index(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ParseError(std::string("field '") + key + "' is not a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string text(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_string()) throw ParseError(std::string("field '") + key + "' is not a string");
  return v.get<std::string>();
}

bool flag(const json& j, const char* key, bool fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw ParseError(std::string("field '") + key + "' is not a boolean");
  return it->get<bool>();
}

Box box_from(const json& j) {
  const json& b = j.at("bbox");
  if (!b.is_array() || b.size() != 4) throw ParseError("bbox must be [x, y, w, h]");
  for (const auto& v : b) {
    if (!v.is_number()) throw ParseError("bbox entries must be numbers");
  }
  return {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
}

ojson box_to(const Box& b) { return ojson::array({b.x, b.y, b.w, b.h}); }

std::optional<EulerAngles> viewpoint_from(const json& j) {
  const auto it = j.find("viewpoint");
  if (it == j.end() || it->is_null()) return std::nullopt;
  return EulerAngles(number(*it, "azimuth"), number(*it, "elevation"), number(*it, "cyclorotation"));
}

ojson viewpoint_to(const EulerAngles& e) {
  ojson v = ojson::object();
  v["azimuth"] = e.azimuth();
  v["elevation"] = e.elevation();
  v["cyclorotation"] = e.cyclorotation();
  return v;
}

std::vector<KeypointHypothesis> hypotheses_from(const json& arr) {
  if (!arr.is_array()) throw ParseError("keypoint list must be an array");
  std::vector<KeypointHypothesis> out;
  for (const auto& k : arr) {
    out.push_back({index(k, "id"), {number(k, "x"), number(k, "y")},
                   k.contains("score") ? number(k, "score") : 0.0});
  }
  return out;
}

ojson hypotheses_to(std::span<const KeypointHypothesis> hyps) {
  ojson arr = ojson::array();
  for (const auto& h : hyps) {
    ojson k = ojson::object();
    k["id"] = h.id;
    k["x"] = h.location.x;
    k["y"] = h.location.y;
    k["score"] = h.score;
    arr.push_back(std::move(k));
  }
  return arr;
}

// ---------------------------------------------------------------------------
// records

Instance instance_from(const json& j) {
  Instance inst;
  inst.id = text(j, "id");
  inst.image_id = text(j, "image_id");
  inst.class_index = index(j, "class");
  inst.bbox = box_from(j);
  inst.occluded = flag(j, "occluded", false);
  inst.truncated = flag(j, "truncated", false);
  inst.viewpoint = viewpoint_from(j);
  const json& kps = j.at("keypoints");
  if (!kps.is_array()) throw ParseError("keypoints must be an array");
  for (const auto& k : kps) {
    inst.keypoints.push_back({index(k, "id"), {number(k, "x"), number(k, "y")}, flag(k, "visible", true)});
  }
  return inst;
}

ojson instance_to(const Instance& inst) {
  ojson j = ojson::object();
  j["id"] = inst.id;
  j["image_id"] = inst.image_id;
  j["class"] = inst.class_index;
  j["bbox"] = box_to(inst.bbox);
  j["occluded"] = inst.occluded;
  j["truncated"] = inst.truncated;
  if (inst.viewpoint) j["viewpoint"] = viewpoint_to(*inst.viewpoint);
  ojson kps = ojson::array();
  for (const auto& k : inst.keypoints) {
    ojson o = ojson::object();
    o["id"] = k.id;
    o["x"] = k.location.x;
    o["y"] = k.location.y;
    o["visible"] = k.visible;
    kps.push_back(std::move(o));
  }
  j["keypoints"] = std::move(kps);
  return j;
}

Prediction prediction_from(const json& j) {
  Prediction p;
  p.instance_id = text(j, "instance_id");
  p.viewpoint = viewpoint_from(j);
  if (const auto it = j.find("viewpoint_scores"); it != j.end()) {
    if (!it->is_array()) throw ParseError("viewpoint_scores must be an array");
    for (const auto& v : *it) {
      if (!v.is_number()) throw ParseError("viewpoint_scores entries must be numbers");
      p.viewpoint_scores.push_back(v.get<double>());
    }
  }
  if (const auto it = j.find("keypoints"); it != j.end()) p.keypoints = hypotheses_from(*it);
  return p;
}

ojson prediction_to(const Prediction& p) {
  ojson j = ojson::object();
  j["instance_id"] = p.instance_id;
  if (p.viewpoint) j["viewpoint"] = viewpoint_to(*p.viewpoint);
  if (!p.viewpoint_scores.empty()) j["viewpoint_scores"] = p.viewpoint_scores;
  j["keypoints"] = hypotheses_to(p.keypoints);
  return j;
}

Detection detection_from(const json& j) {
  Detection d;
  d.id = text(j, "id");
  d.image_id = text(j, "image_id");
  d.class_index = index(j, "class");
  d.bbox = box_from(j);
  d.score = number(j, "score");
  d.viewpoint = viewpoint_from(j);
  if (const auto it = j.find("keypoint_hypotheses"); it != j.end()) {
    d.keypoint_hypotheses = hypotheses_from(*it);
  }
  return d;
}

ojson detection_to(const Detection& d) {
  ojson j = ojson::object();
  j["id"] = d.id;
  j["image_id"] = d.image_id;
  j["class"] = d.class_index;
  j["bbox"] = box_to(d.bbox);
  j["score"] = d.score;
  if (d.viewpoint) j["viewpoint"] = viewpoint_to(*d.viewpoint);
  j["keypoint_hypotheses"] = hypotheses_to(d.keypoint_hypotheses);
  return j;
}

template <typename T, typename ToJson>
std::string to_jsonl(std::span<const T> records, ToJson to_json) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// manifest

Manifest manifest_from(const json& j) {
  Manifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kSchemaVersion) {
    throw VersionError("unsupported schema version " + std::to_string(m.schema_version));
  }
  m.euler_convention = text(j, "euler_convention");
  if (const auto it = j.find("viewpoint_bins"); it != j.end()) m.viewpoint_bins = index(j, "viewpoint_bins");
  for (const auto& c : j.at("classes")) {
    ClassInfo info;
    info.name = text(c, "name");
    info.keypoints = c.at("keypoints").get<std::vector<std::string>>();
    if (const auto it = c.find("symmetry_pairs"); it != c.end()) {
      for (const auto& p : *it) {
        if (!p.is_array() || p.size() != 2) throw ParseError("symmetry pairs must be [a, b]");
        info.symmetry_pairs.emplace_back(p[0].get<std::size_t>(), p[1].get<std::size_t>());
      }
    }
    m.classes.push_back(std::move(info));
  }
  if (const auto it = j.find("excluded_classes"); it != j.end()) {
    m.excluded_classes = it->get<std::vector<std::string>>();
  }
  return m;
}

ojson manifest_to(const Manifest& m) {
  ojson j = ojson::object();
  j["schema_version"] = m.schema_version;
  j["euler_convention"] = m.euler_convention;
  j["viewpoint_bins"] = m.viewpoint_bins;
  ojson classes = ojson::array();
  for (const auto& c : m.classes) {
    ojson o = ojson::object();
    o["name"] = c.name;
    o["keypoints"] = c.keypoints;
    ojson pairs = ojson::array();
    for (const auto& [a, b] : c.symmetry_pairs) pairs.push_back(ojson::array({a, b}));
    o["symmetry_pairs"] = std::move(pairs);
    classes.push_back(std::move(o));
  }
  j["classes"] = std::move(classes);
  j["excluded_classes"] = m.excluded_classes;
  return j;
}

// ---------------------------------------------------------------------------
// priors

ojson prior_entry_to(std::size_t cls, const PriorEntry& e) {
  ojson j = ojson::object();
  j["class"] = cls;
  ojson r = ojson::array();
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) r.push_back(e.rotation(row, col));
  }
  j["rotation"] = std::move(r);
  ojson kps = ojson::array();
  for (std::size_t k = 0; k < e.keypoints.size(); ++k) {
    if (!e.keypoints[k]) continue;
    ojson o = ojson::object();
    o["id"] = k;
    o["x"] = e.keypoints[k]->x;
    o["y"] = e.keypoints[k]->y;
    kps.push_back(std::move(o));
  }
  j["keypoints"] = std::move(kps);
  return j;
}

// ---------------------------------------------------------------------------
// little-endian binary helpers

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_record_id(const std::string& id) {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
    throw ValidationError("record id '" + id + "' cannot be used as a file name");
  }
}

// ---------------------------------------------------------------------------
// report rendering

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string fmt_value(const ReportValue& v) { return v ? fmt6(*v) : "absent"; }

ojson json_value(const ReportValue& v) {
  if (!v) return nullptr;
  return std::stod(fmt6(*v));
}

ojson report_json(const EvalReport& r) {
  ojson j = ojson::object();
  j["title"] = r.title;
  ojson summary = ojson::object();
  for (const auto& [k, v] : r.summary) summary[k] = json_value(v);
  j["summary"] = std::move(summary);
  ojson per_class = ojson::object();
  for (const auto& [cls, metrics] : r.per_class) {
    ojson m = ojson::object();
    for (const auto& [k, v] : metrics) m[k] = json_value(v);
    per_class[cls] = std::move(m);
  }
  j["per_class"] = std::move(per_class);
  ojson per_kp = ojson::object();
  for (const auto& [cls, metrics] : r.per_keypoint) {
    ojson m = ojson::object();
    for (const auto& [k, values] : metrics) {
      ojson arr = ojson::array();
      for (const auto& v : values) arr.push_back(json_value(v));
      m[k] = std::move(arr);
    }
    per_kp[cls] = std::move(m);
  }
  j["per_keypoint"] = std::move(per_kp);
  ojson curves = ojson::object();
  for (const auto& [name, c] : r.curves) {
    ojson o = ojson::object();
    ojson rec = ojson::array(), prec = ojson::array();
    for (double v : c.recall) rec.push_back(std::stod(fmt6(v)));
    for (double v : c.precision) prec.push_back(std::stod(fmt6(v)));
    o["recall"] = std::move(rec);
    o["precision"] = std::move(prec);
    curves[name] = std::move(o);
  }
  j["curves"] = std::move(curves);
  ojson slices = ojson::array();
  for (const auto& s : r.slices) {
    ojson o = ojson::object();
    o["name"] = s.name;
    if (s.report) {
      o["status"] = "present";
      o["report"] = report_json(*s.report);
    } else {
      o["status"] = "absent";
    }
    slices.push_back(std::move(o));
  }
  j["slices"] = std::move(slices);
  return j;
}

void report_table(const EvalReport& r, const std::string& indent, std::ostringstream& out) {
  out << indent << "== " << (r.title.empty() ? "report" : r.title) << " ==\n";
  if (!r.summary.empty()) {
    out << indent << "[summary]\n";
    for (const auto& [k, v] : r.summary) {
      char line[160];
      std::snprintf(line, sizeof line, "%-28s %s\n", k.c_str(), fmt_value(v).c_str());
      out << indent << line;
    }
  }
  if (!r.per_class.empty()) {
    out << indent << "[per-class]\n";
    for (const auto& [cls, metrics] : r.per_class) {
      out << indent << cls << "\n";
      for (const auto& [k, v] : metrics) {
        char line[160];
        std::snprintf(line, sizeof line, "  %-26s %s\n", k.c_str(), fmt_value(v).c_str());
        out << indent << line;
      }
    }
  }
  if (!r.per_keypoint.empty()) {
    out << indent << "[per-keypoint]\n";
    for (const auto& [cls, metrics] : r.per_keypoint) {
      for (const auto& [k, values] : metrics) {
        out << indent << cls << " " << k << ":";
        for (const auto& v : values) out << " " << fmt_value(v);
        out << "\n";
      }
    }
  }
  if (!r.curves.empty()) {
    out << indent << "[curves]\n";
    for (const auto& [name, c] : r.curves) {
      out << indent << name << ": " << c.recall.size() << " points";
      if (!c.recall.empty()) {
        out << ", final recall " << fmt6(c.recall.back()) << ", final precision "
            << fmt6(c.precision.back());
      }
      out << "\n";
    }
  }
  for (const auto& s : r.slices) {
    if (!s.report) {
      out << indent << "[slice " << s.name << "] absent\n";
      continue;
    }
    out << indent << "[slice " << s.name << "]\n";
    report_table(*s.report, indent + "  ", out);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

std::vector<std::size_t> Manifest::keypoints_per_class() const {
  std::vector<std::size_t> out;
  out.reserve(classes.size());
  for (const auto& c : classes) out.push_back(c.keypoints.size());
  return out;
}

SymmetryMap Manifest::symmetry() const {
  SymmetryMap map;
  for (const auto& c : classes) {
    std::vector<std::size_t> partners(c.keypoints.size());
    for (std::size_t k = 0; k < partners.size(); ++k) partners[k] = k;
    for (const auto& [a, b] : c.symmetry_pairs) {
      if (a < partners.size() && b < partners.size()) {
        partners[a] = b;
        partners[b] = a;
      }
    }
    map.push_back(std::move(partners));
  }
  return map;
}

std::set<std::size_t> Manifest::excluded_indices() const {
  std::set<std::size_t> out;
  for (const auto& name : excluded_classes) {
    if (auto idx = class_index(name)) out.insert(*idx);
  }
  return out;
}

std::optional<std::size_t> Manifest::class_index(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].name == name) return i;
  }
  return std::nullopt;
}

const std::string& Manifest::class_name(std::size_t index) const {
  if (index >= classes.size()) throw std::out_of_range("class index out of range");
  return classes[index].name;
}

void Manifest::validate() const {
  if (schema_version != kSchemaVersion) {
    throw VersionError("unsupported schema version " + std::to_string(schema_version));
  }
  if (euler_convention != kEulerConvention) {
    throw VersionError("unknown euler convention '" + euler_convention + "' (expected ZYX)");
  }
  if (viewpoint_bins == 0) throw ValidationError("manifest: viewpoint_bins must be positive");
  std::unordered_set<std::string> names;
  for (const auto& c : classes) {
    if (c.name.empty()) throw ValidationError("manifest: class with empty name");
    if (!names.insert(c.name).second) throw ValidationError("manifest: duplicate class '" + c.name + "'");
    std::vector<int> seen(c.keypoints.size(), 0);
    for (const auto& [a, b] : c.symmetry_pairs) {
      if (a >= c.keypoints.size() || b >= c.keypoints.size()) {
        throw ValidationError("manifest: class '" + c.name + "' symmetry pair out of range");
      }
      if (++seen[a] > 1 || (a != b && ++seen[b] > 1)) {
        throw ValidationError("manifest: class '" + c.name + "' keypoint listed in two symmetry pairs");
      }
    }
  }
}

const PriorBank* Dataset::prior_for(std::size_t class_index) const {
  for (const auto& b : priors) {
    if (b.class_index == class_index) return &b;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// loading

Manifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
  Manifest m;
  try {
    m = manifest_from(j);
  } catch (const json::exception& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
  m.validate();
  return m;
}

std::vector<Prediction> load_predictions(const fs::path& path) {
  std::vector<Prediction> out;
  for_each_jsonl(path, [&](const json& j, const std::string&) {
    Prediction p = prediction_from(j);
    p.validate();
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<Detection> load_detections(const fs::path& path) {
  std::vector<Detection> out;
  for_each_jsonl(path, [&](const json& j, const std::string&) {
    Detection d = detection_from(j);
    d.validate();
    out.push_back(std::move(d));
  });
  return out;
}

void validate_predictions(const Manifest& manifest, std::span<const Instance> instances,
                          std::span<const Prediction> predictions) {
  std::unordered_map<std::string, const Instance*> by_id;
  for (const auto& i : instances) by_id.emplace(i.id, &i);
  const std::size_t n_scores = manifest.classes.size() * 3 * manifest.viewpoint_bins;
  const auto kpc = manifest.keypoints_per_class();
  std::unordered_set<std::string> seen;
  for (const auto& p : predictions) {
    const auto it = by_id.find(p.instance_id);
    if (it == by_id.end()) {
      throw ValidationError("prediction refers to unknown instance '" + p.instance_id + "'");
    }
    if (!seen.insert(p.instance_id).second) {
      throw ValidationError("duplicate prediction for instance '" + p.instance_id + "'");
    }
    if (!p.viewpoint_scores.empty() && p.viewpoint_scores.size() != n_scores) {
      throw ValidationError("prediction for '" + p.instance_id + "' has " +
                            std::to_string(p.viewpoint_scores.size()) + " viewpoint scores, expected " +
                            std::to_string(n_scores));
    }
    for (const auto& k : p.keypoints) {
      if (k.id >= kpc[it->second->class_index]) {
        throw ValidationError("prediction for '" + p.instance_id + "' has keypoint id " +
                              std::to_string(k.id) + " beyond the class layout");
      }
    }
  }
}

std::vector<ResponseMap> read_response_maps(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string name = path.filename().string();
  constexpr std::size_t kHeader = 24;
  if (bytes.size() < kHeader) throw ParseError(name + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError(name + ": bad magic (expected VKRM)");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kResponseMapVersion) {
    throw VersionError(name + ": unsupported response map version " + std::to_string(version));
  }
  const std::uint32_t cls = get_u32(bytes, 8);
  const std::uint32_t count = get_u32(bytes, 12);
  const std::uint32_t h = get_u32(bytes, 16);
  const std::uint32_t w = get_u32(bytes, 20);
  if (h != w || (h != kGridSize && h != kCoarseGridSize)) {
    throw ValidationError(name + ": response map shape " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not 6x6 or 12x12");
  }
  const std::size_t cells = static_cast<std::size_t>(h) * w;
  if (bytes.size() != kHeader + 4 * cells * count) {
    throw ParseError(name + ": payload size does not match header");
  }
  std::vector<ResponseMap> out;
  out.reserve(count);
  std::size_t offset = kHeader;
  for (std::uint32_t k = 0; k < count; ++k) {
    ResponseMap m{cls, k, Grid(h, w)};
    for (double& v : m.grid.data()) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(bytes, offset)));
      offset += 4;
    }
    try {
      m.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(name + ": channel " + std::to_string(k) + ": " + e.what());
    }
    out.push_back(std::move(m));
  }
  return out;
}

void write_response_maps(const fs::path& path, std::span<const ResponseMap> maps) {
  if (maps.empty()) throw ValidationError("write_response_maps: empty stack");
  const std::size_t rows = maps.front().grid.rows(), cols = maps.front().grid.cols();
  std::string out(kMagic, 4);
  put_u32(out, kResponseMapVersion);
  put_u32(out, static_cast<std::uint32_t>(maps.front().class_index));
  put_u32(out, static_cast<std::uint32_t>(maps.size()));
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const ResponseMap& m = maps[k];
    if (m.grid.rows() != rows || m.grid.cols() != cols || m.class_index != maps.front().class_index ||
        m.keypoint_id != k) {
      throw ValidationError("write_response_maps: inconsistent channel " + std::to_string(k));
    }
    for (double v : m.grid.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  write_file(path, out);
}

std::vector<PriorBank> load_prior_banks(const fs::path& path, const Manifest& manifest) {
  const auto kpc = manifest.keypoints_per_class();
  std::map<std::size_t, PriorBank> banks;
  for_each_jsonl(path, [&](const json& j, const std::string& where) {
    const std::size_t cls = index(j, "class");
    if (cls >= kpc.size()) throw ValidationError(where + ": prior entry has unknown class");
    const json& r = j.at("rotation");
    if (!r.is_array() || r.size() != 9) throw ParseError(where + ": rotation must hold 9 numbers");
    Eigen::Matrix3d m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = r[static_cast<std::size_t>(i)].get<double>();
    PriorEntry e{RotationMatrix(m), std::vector<std::optional<Point2>>(kpc[cls])};
    for (const auto& k : j.at("keypoints")) {
      const std::size_t id = index(k, "id");
      if (id >= kpc[cls]) throw ValidationError(where + ": prior keypoint id out of range");
      e.keypoints[id] = Point2{number(k, "x"), number(k, "y")};
    }
    PriorBank& bank = banks[cls];
    bank.class_index = cls;
    bank.entries.push_back(std::move(e));
  });
  std::vector<PriorBank> out;
  for (auto& [cls, bank] : banks) {
    try {
      bank.validate();
    } catch (const std::invalid_argument& e) {
      throw ValidationError(path.filename().string() + ": class " + std::to_string(cls) + ": " + e.what());
    }
    out.push_back(std::move(bank));
  }
  return out;
}

std::map<std::string, RecordMaps> load_maps_directory(const fs::path& dir, const Dataset& dataset) {
  if (!fs::is_directory(dir)) throw IoError("maps directory " + dir.string() + " does not exist");
  const auto kpc = dataset.manifest.keypoints_per_class();
  std::unordered_map<std::string, std::size_t> record_class;
  for (const auto& i : dataset.instances) record_class[i.id] = i.class_index;
  for (const auto& d : dataset.detections) record_class[d.id] = d.class_index;

  std::map<std::string, RecordMaps> maps;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".vkrm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    const bool fine = ends_with(name, kFineSuffix);
    const bool coarse = ends_with(name, kCoarseSuffix);
    if (!fine && !coarse) throw ValidationError(name + ": expected <id>.fine.vkrm or <id>.coarse.vkrm");
    const std::string id = name.substr(0, name.size() - std::strlen(fine ? kFineSuffix : kCoarseSuffix));
    const auto rc = record_class.find(id);
    if (rc == record_class.end()) throw ValidationError(name + ": no record with id '" + id + "'");
    auto stack = read_response_maps(path);
    const std::size_t want = fine ? kGridSize : kCoarseGridSize;
    if (stack.empty() || stack.front().grid.rows() != want) {
      throw ValidationError(name + ": wrong grid size for a " + (fine ? "fine" : "coarse") + " stack");
    }
    if (stack.front().class_index != rc->second || stack.size() != kpc[rc->second]) {
      throw ValidationError(name + ": class or keypoint count disagrees with record '" + id + "'");
    }
    (fine ? maps[id].fine : maps[id].coarse) = std::move(stack);
  }
  for (const auto& [id, m] : maps) {
    if (m.fine.empty() || m.coarse.empty()) {
      throw ValidationError("record '" + id + "' has only one of its fine/coarse response stacks");
    }
  }
  return maps;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
  Dataset ds;
  ds.manifest = load_manifest(dir / kManifestFile);
  const auto kpc = ds.manifest.keypoints_per_class();
  const std::size_t n_classes = kpc.size();

  std::unordered_set<std::string> ids;
  for_each_jsonl(dir / kAnnotationsFile, [&](const json& j, const std::string& where) {
    Instance inst = instance_from(j);
    inst.validate();
    if (inst.class_index >= n_classes) {
      throw ValidationError(where + ": instance '" + inst.id + "' has unknown class " +
                            std::to_string(inst.class_index));
    }
    std::unordered_set<std::size_t> kp_ids;
    for (const auto& k : inst.keypoints) {
      if (k.id >= kpc[inst.class_index] || !kp_ids.insert(k.id).second) {
        throw ValidationError(where + ": instance '" + inst.id + "' has invalid or duplicate keypoint id " +
                              std::to_string(k.id));
      }
    }
    if (!ids.insert(inst.id).second) throw ValidationError(where + ": duplicate record id '" + inst.id + "'");
    ds.instances.push_back(std::move(inst));
  });

  if (fs::exists(dir / kPredictionsFile)) {
    ds.predictions = load_predictions(dir / kPredictionsFile);
    validate_predictions(ds.manifest, ds.instances, ds.predictions);
  }

  if (fs::exists(dir / kDetectionsFile)) {
    ds.detections = load_detections(dir / kDetectionsFile);
    for (const auto& d : ds.detections) {
      if (d.class_index >= n_classes) {
        throw ValidationError("detection '" + d.id + "' has unknown class " + std::to_string(d.class_index));
      }
      for (const auto& h : d.keypoint_hypotheses) {
        if (h.id >= kpc[d.class_index]) {
          throw ValidationError("detection '" + d.id + "' has keypoint id " + std::to_string(h.id) +
                                " beyond the class layout");
        }
      }
      if (!ids.insert(d.id).second) throw ValidationError("duplicate record id '" + d.id + "'");
    }
  }

  if (fs::exists(dir / kPriorsFile)) ds.priors = load_prior_banks(dir / kPriorsFile, ds.manifest);
  if (fs::is_directory(dir / kMapsDir)) ds.maps = load_maps_directory(dir / kMapsDir, ds);
  return ds;
}

// ---------------------------------------------------------------------------
// writing

void write_predictions(const fs::path& path, std::span<const Prediction> predictions) {
  write_file(path, to_jsonl(predictions, prediction_to));
}

void write_detections(const fs::path& path, std::span<const Detection> detections) {
  write_file(path, to_jsonl(detections, detection_to));
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  ensure_directory(dir);
  write_file(dir / kManifestFile, manifest_to(ds.manifest).dump(2) + "\n");
  write_file(dir / kAnnotationsFile, to_jsonl(std::span<const Instance>(ds.instances), instance_to));
  write_predictions(dir / kPredictionsFile, ds.predictions);
  write_detections(dir / kDetectionsFile, ds.detections);
  std::string priors;
  for (const auto& bank : ds.priors) {
    for (const auto& e : bank.entries) priors += prior_entry_to(bank.class_index, e).dump() + "\n";
  }
  write_file(dir / kPriorsFile, priors);
  if (!ds.maps.empty()) {
    ensure_directory(dir / kMapsDir);
    for (const auto& [id, m] : ds.maps) {
      check_record_id(id);
      write_response_maps(dir / kMapsDir / (id + kFineSuffix), m.fine);
      write_response_maps(dir / kMapsDir / (id + kCoarseSuffix), m.coarse);
    }
  }
}

std::string format_report(const EvalReport& report, ReportFormat format) {
  if (format == ReportFormat::kJson) return report_json(report).dump(2) + "\n";
  std::ostringstream out;
  report_table(report, "", out);
  return out.str();
}

void write_report(const EvalReport& report, const fs::path& path, ReportFormat format) {
  write_file(path, format_report(report, format));
}

}  // namespace vkp
