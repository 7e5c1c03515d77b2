#pragma once

// Domain types and file I/O shared by the whole toolkit: landmark
// sequences, AU label tracks, and dataset manifests.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace fera {

using json = nlohmann::json;

struct FeraError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kNumLandmarks = 66;
constexpr int kNumJaw = 17;
constexpr int kNumInner = 49;  // inner points, 1-based indices 1..49
constexpr int kUnlabeled = 9;  // label value for frames excluded from scoring

inline const std::vector<int>& occurrence_aus() {
  static const std::vector<int> v{1, 4, 6, 7, 10, 12, 14, 15, 17, 23};
  return v;
}
inline const std::vector<int>& intensity_aus() {
  static const std::vector<int> v{1, 4, 6, 10, 12, 14, 17};
  return v;
}

using Point2 = std::array<double, 2>;

// Global landmark index of inner point i (1-based, 1..49). The 66-point
// markup is 17 jaw points followed by the 49 inner points.
inline int inner_to_global(int inner_1based) { return kNumJaw + inner_1based - 1; }

using Shape = std::array<Point2, kNumLandmarks>;  // one 66-point shape

struct LandmarkFrame {
  Shape points{};
  bool tracked = true;
};

struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;
  std::string subject_id;
  std::string task_id;
  int view_id = 0;

  int size() const { return static_cast<int>(frames.size()); }
};

// Per-frame labels for the two sub-challenges. Values may be 9 (unlabeled).
struct AULabels {
  std::map<int, std::vector<int>> occurrence;  // AU -> {0,1,9} per frame
  std::map<int, std::vector<int>> intensity;   // AU -> {0..5,9} per frame

  int n_frames() const {
    if (!occurrence.empty()) return static_cast<int>(occurrence.begin()->second.size());
    if (!intensity.empty()) return static_cast<int>(intensity.begin()->second.size());
    return 0;
  }
  bool operator==(const AULabels&) const = default;
};

struct ManifestEntry {
  std::string sequence_path;  // relative to the manifest file
  std::string labels_path;
  std::string subject;
  std::string task;
  int view = 0;
  std::string partition;  // train | development | test
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::map<int, std::pair<double, double>> view_order;  // view_id -> (pitch, yaw)
  std::filesystem::path root;  // directory of the manifest file

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
  std::vector<ManifestEntry> partition(const std::string& name) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.partition == name) out.push_back(e);
    return out;
  }
};

// Default view index map: views 1..9 enumerate (pitch, yaw) lexicographically
// over pitch {-40,-20,0} x yaw {-40,0,40}. Manifests may override.
inline std::map<int, std::pair<double, double>> default_view_order() {
  std::map<int, std::pair<double, double>> m;
  int id = 1;
  for (double pitch : {-40.0, -20.0, 0.0})
    for (double yaw : {-40.0, 0.0, 40.0}) m[id++] = {pitch, yaw};
  return m;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

// Landmark file: CSV, one row per frame, 132 columns x1,y1,...,x66,y66,
// no header. Frames with any non-finite or missing value become
// tracked=false with all coordinates zeroed; a row of all zeros likewise.
inline LandmarkSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FeraError("cannot open landmark file: " + path.string());
  LandmarkSequence seq;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 2 * kNumLandmarks)
      throw FeraError(path.string() + ": row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " columns, expected 132");
    LandmarkFrame f;
    bool bad = false, all_zero = true;
    for (int i = 0; i < kNumLandmarks; ++i) {
      for (int d = 0; d < 2; ++d) {
        double v = 0;
        try {
          size_t pos = 0;
          const std::string& s = cells[2 * i + d];
          if (s.empty()) { bad = true; continue; }
          v = std::stod(s, &pos);
          if (pos != s.size()) bad = true;
        } catch (const std::exception&) {
          bad = true;
        }
        if (!std::isfinite(v)) bad = true;
        if (v != 0.0) all_zero = false;
        f.points[i][d] = v;
      }
    }
    if (bad || all_zero) {
      f = LandmarkFrame{};
      f.tracked = false;
    }
    seq.frames.push_back(f);
  }
  if (seq.frames.empty()) throw FeraError("empty landmark file: " + path.string());
  return seq;
}

inline void write_sequence(const std::filesystem::path& path, const LandmarkSequence& seq) {
  std::ofstream out(path);
  if (!out) throw FeraError("cannot write landmark file: " + path.string());
  for (const auto& f : seq.frames) {
    for (int i = 0; i < kNumLandmarks; ++i) {
      if (i) out << ',';
      out << detail::fmt_coord(f.points[i][0]) << ',' << detail::fmt_coord(f.points[i][1]);
    }
    out << '\n';
  }
}

// Label file: CSV with a header row occ_AU1,...,occ_AU23,int_AU1,...,int_AU17.
inline AULabels load_labels(const std::filesystem::path& path, int n_frames) {
  std::ifstream in(path);
  if (!in) throw FeraError("cannot open label file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FeraError("empty label file: " + path.string());
  auto header = detail::split_csv_line(line);
  struct Col {
    bool occ;
    int au;
  };
  std::vector<Col> cols;
  for (const auto& h : header) {
    if (h.rfind("occ_AU", 0) == 0)
      cols.push_back({true, std::stoi(h.substr(6))});
    else if (h.rfind("int_AU", 0) == 0)
      cols.push_back({false, std::stoi(h.substr(6))});
    else
      throw FeraError(path.string() + ": unknown label column '" + h + "'");
  }
  AULabels labels;
  for (const auto& c : cols) {
    auto& m = c.occ ? labels.occurrence : labels.intensity;
    m[c.au] = {};
  }
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != cols.size())
      throw FeraError(path.string() + ": row " + std::to_string(row) + " column count mismatch");
    for (size_t i = 0; i < cols.size(); ++i) {
      int v = std::stoi(cells[i]);
      int hi = cols[i].occ ? 1 : 5;
      if (v != kUnlabeled && (v < 0 || v > hi))
        throw FeraError(path.string() + ": row " + std::to_string(row) + " value " +
                        std::to_string(v) + " out of range");
      (cols[i].occ ? labels.occurrence : labels.intensity)[cols[i].au].push_back(v);
    }
  }
  if (row != n_frames)
    throw FeraError(path.string() + ": " + std::to_string(row) + " label rows for " +
                    std::to_string(n_frames) + " frames");
  for (int au : occurrence_aus())
    if (!labels.occurrence.count(au))
      throw FeraError(path.string() + ": missing occurrence column for AU" + std::to_string(au));
  for (int au : intensity_aus())
    if (!labels.intensity.count(au))
      throw FeraError(path.string() + ": missing intensity column for AU" + std::to_string(au));
  return labels;
}

inline void write_labels(const std::filesystem::path& path, const AULabels& labels) {
  std::ofstream out(path);
  if (!out) throw FeraError("cannot write label file: " + path.string());
  bool first = true;
  for (int au : occurrence_aus()) {
    if (!first) out << ',';
    out << "occ_AU" << au;
    first = false;
  }
  for (int au : intensity_aus()) out << ",int_AU" << au;
  out << '\n';
  int n = labels.n_frames();
  for (int t = 0; t < n; ++t) {
    first = true;
    for (int au : occurrence_aus()) {
      if (!first) out << ',';
      out << labels.occurrence.at(au)[t];
      first = false;
    }
    for (int au : intensity_aus()) out << ',' << labels.intensity.at(au)[t];
    out << '\n';
  }
}

// Manifest: JSON with fields view_order and entries[]; paths relative to the
// manifest file. Validates view ids, duplicates, file existence, the view
// grid bijection, and that all views of a (subject, task) share labels.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FeraError("cannot open manifest: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FeraError("manifest parse error: " + std::string(e.what()));
  }
  DatasetManifest m;
  m.root = std::filesystem::absolute(path).parent_path();
  if (j.contains("view_order")) {
    for (auto& [k, v] : j.at("view_order").items())
      m.view_order[std::stoi(k)] = {v.at(0).get<double>(), v.at(1).get<double>()};
  } else {
    m.view_order = default_view_order();
  }
  // view_order must be a bijection onto the 3x3 grid
  std::set<std::pair<double, double>> grid;
  for (double p : {-40.0, -20.0, 0.0})
    for (double y : {-40.0, 0.0, 40.0}) grid.insert({p, y});
  std::set<std::pair<double, double>> seen;
  for (const auto& [id, py] : m.view_order) {
    if (id < 1 || id > 9) throw FeraError("manifest view_order has view id " + std::to_string(id));
    if (!grid.count(py))
      throw FeraError("manifest view_order has (pitch,yaw) off the grid for view " + std::to_string(id));
    seen.insert(py);
  }
  if (m.view_order.size() != 9 || seen.size() != 9)
    throw FeraError("manifest view_order is not a bijection onto the 9 view grid");

  std::set<std::tuple<std::string, std::string, int>> keys;
  for (const auto& je : j.at("entries")) {
    ManifestEntry e;
    e.sequence_path = je.at("sequence").get<std::string>();
    e.labels_path = je.at("labels").get<std::string>();
    e.subject = je.at("subject").get<std::string>();
    e.task = je.at("task").get<std::string>();
    e.view = je.at("view").get<int>();
    e.partition = je.value("partition", "train");
    if (e.view < 1 || e.view > 9)
      throw FeraError("manifest entry has view " + std::to_string(e.view) + ", expected 1..9");
    auto key = std::make_tuple(e.subject, e.task, e.view);
    if (keys.count(key))
      throw FeraError("duplicate manifest entry (" + e.subject + ", " + e.task + ", view " +
                      std::to_string(e.view) + ")");
    keys.insert(key);
    if (!std::filesystem::exists(m.resolve(e.sequence_path)))
      throw FeraError("missing sequence file: " + e.sequence_path);
    if (!std::filesystem::exists(m.resolve(e.labels_path)))
      throw FeraError("missing label file: " + e.labels_path);
    m.entries.push_back(e);
  }

  // All views of a (subject, task) must carry identical labels.
  std::map<std::pair<std::string, std::string>, std::pair<std::string, AULabels>> first_labels;
  for (const auto& e : m.entries) {
    auto seq = load_sequence(m.resolve(e.sequence_path));
    auto labels = load_labels(m.resolve(e.labels_path), seq.size());
    auto key = std::make_pair(e.subject, e.task);
    auto it = first_labels.find(key);
    if (it == first_labels.end()) {
      first_labels[key] = {e.labels_path, labels};
    } else if (it->second.first != e.labels_path && !(it->second.second == labels)) {
      throw FeraError("views of (" + e.subject + ", " + e.task + ") disagree on labels");
    }
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  json j;
  json vo = json::object();
  for (const auto& [id, py] : m.view_order) vo[std::to_string(id)] = {py.first, py.second};
  j["view_order"] = vo;
  j["entries"] = json::array();
  for (const auto& e : m.entries) {
    j["entries"].push_back({{"sequence", e.sequence_path},
                            {"labels", e.labels_path},
                            {"subject", e.subject},
                            {"task", e.task},
                            {"view", e.view},
                            {"partition", e.partition}});
  }
  std::ofstream out(path);
  if (!out) throw FeraError("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fera
