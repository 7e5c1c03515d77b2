#pragma once

// Orchestration: 90/30 windowing, class balancing, training-view
// restriction, per-frame fusion of overlapping window predictions, and the
// end-to-end train/predict drivers over a dataset manifest.

#include <algorithm>
#include <atomic>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <thread>

#include "fera/chain.hpp"
#include "fera/features.hpp"
#include "fera/metrics.hpp"
#include "fera/shape.hpp"

namespace fera {

struct WindowSpec {
  int length = 90;
  int stride = 30;
};

// Windows start at 0, `stride` apart. A final window snapped to the end is
// added when the tail is not covered; a single short window covers T < length.
inline std::vector<std::pair<int, int>> segment(int T, const WindowSpec& spec) {
  if (T < 1) throw FeraError("segment: empty sequence");
  if (spec.stride < 1 || spec.stride > spec.length)
    throw FeraError("segment: invalid window spec");
  std::vector<std::pair<int, int>> out;
  if (T <= spec.length) {
    out.push_back({0, T});
    return out;
  }
  for (int start = 0; start + spec.length <= T; start += spec.stride)
    out.push_back({start, start + spec.length});
  if (out.back().second < T) out.push_back({T - spec.length, T});
  return out;
}

// Majority frame label of a window, unlabeled frames excluded.
// Ties break toward the lower label; all-unlabeled windows return -1.
inline int window_majority_label(const std::vector<int>& y) {
  std::map<int, int> counts;
  for (int v : y)
    if (v != kUnlabeled) counts[v]++;
  int best = -1, best_n = 0;
  for (const auto& [label, n] : counts)
    if (n > best_n) {
      best = label;
      best_n = n;
    }
  return best;
}

// Undersample window classes to the smallest non-empty class size,
// random without replacement. Single-class input passes through.
inline std::vector<LabeledWindow> balance(const std::vector<LabeledWindow>& windows,
                                          std::uint64_t seed) {
  if (windows.empty()) throw FeraError("balance: no windows");
  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < windows.size(); ++i) {
    int c = window_majority_label(windows[i].y);
    if (c >= 0) by_class[c].push_back(static_cast<int>(i));
  }
  if (by_class.empty()) return {};
  size_t smallest = SIZE_MAX;
  for (const auto& [c, idx] : by_class) smallest = std::min(smallest, idx.size());
  std::mt19937_64 rng(seed);
  std::vector<int> keep;
  for (auto& [c, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(smallest);
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  std::vector<LabeledWindow> out;
  out.reserve(keep.size());
  for (int i : keep) out.push_back(windows[i]);
  return out;
}

inline std::vector<ManifestEntry> select_training_views(const std::vector<ManifestEntry>& entries,
                                                        const std::set<int>& views) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (views.count(e.view)) out.push_back(e);
  if (out.empty()) throw FeraError("select_training_views: no entries in the training views");
  return out;
}

struct FusedPrediction {
  std::vector<int> labels;
  std::vector<double> scores;  // winning window score per frame
  std::vector<int> coverage;   // number of covering windows per frame
};

// Per frame, take the label from the highest-scoring covering window;
// ties go to the earliest window.
inline FusedPrediction fuse(const std::vector<std::pair<int, int>>& windows,
                            const std::vector<WindowPrediction>& preds, int T) {
  if (windows.size() != preds.size()) throw FeraError("fuse: window/prediction count mismatch");
  FusedPrediction out;
  out.labels.assign(T, -1);
  out.scores.assign(T, -std::numeric_limits<double>::infinity());
  out.coverage.assign(T, 0);
  for (size_t w = 0; w < windows.size(); ++w) {
    auto [start, end] = windows[w];
    for (int t = start; t < end; ++t) {
      out.coverage[t]++;
      if (preds[w].score > out.scores[t]) {
        out.scores[t] = preds[w].score;
        out.labels[t] = preds[w].labels[t - start];
      }
    }
  }
  for (int t = 0; t < T; ++t)
    if (out.coverage[t] == 0) throw FeraError("fuse: uncovered frame " + std::to_string(t));
  return out;
}

// ---- end-to-end drivers ------------------------------------------------------

struct RunConfig {
  WindowSpec window;
  std::set<int> training_views{5, 6};
  std::uint64_t seed = 1;
  double l2 = 1.0;
  double tol = 1e-5;
  int max_iter = 200;
  int cfs_patience = 5;
  std::vector<int> stable_points = default_stable_points();
  int jobs = 1;
};

struct AuModel {
  std::string kind;  // "crf" | "corf"
  int au = 0;
  FeatureSelection selection;
  Standardizer standardizer;
  CrfParams crf;
  CorfParams corf;
  ChainTrainConfig train_config;
};

struct ModelBundle {
  std::map<int, AuModel> occurrence;  // 10 CRFs
  std::map<int, AuModel> intensity;   // 7 CORFs
};

namespace detail {

// Deterministic parallel map: results land in input order regardless of
// the worker count.
template <typename F>
inline void parallel_for(int n, int jobs, F&& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct LoadedSequence {
  ManifestEntry entry;
  LandmarkSequence seq;
  AULabels labels;
  Eigen::MatrixXd features;  // T x 158
};

inline std::vector<LoadedSequence> load_and_extract(const DatasetManifest& manifest,
                                                    const std::vector<ManifestEntry>& entries,
                                                    const ShapeModel& shape,
                                                    const RunConfig& cfg) {
  std::vector<LoadedSequence> out(entries.size());
  parallel_for(static_cast<int>(entries.size()), cfg.jobs, [&](int i) {
    LoadedSequence& ls = out[i];
    ls.entry = entries[i];
    ls.seq = load_sequence(manifest.resolve(entries[i].sequence_path));
    ls.labels = load_labels(manifest.resolve(entries[i].labels_path), ls.seq.size());
    ls.features = extract(ls.seq, shape, cfg.stable_points);
  });
  return out;
}

// Labeled windows for one AU over a set of extracted sequences. Windows
// containing unlabeled frames are dropped from training.
inline std::vector<LabeledWindow> build_windows(const std::vector<LoadedSequence>& seqs, int au,
                                                bool occurrence, const WindowSpec& spec) {
  std::vector<LabeledWindow> out;
  for (const auto& ls : seqs) {
    const auto& track = occurrence ? ls.labels.occurrence.at(au) : ls.labels.intensity.at(au);
    for (auto [start, end] : segment(ls.seq.size(), spec)) {
      LabeledWindow w;
      w.X = ls.features.block(start, 0, end - start, ls.features.cols());
      w.y.assign(track.begin() + start, track.begin() + end);
      bool has_unlabeled = std::any_of(w.y.begin(), w.y.end(),
                                       [](int v) { return v == kUnlabeled; });
      if (!has_unlabeled) out.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace detail

// Train the 10 occurrence CRFs and 7 intensity CORFs on the manifest's
// train partition, restricted to the configured training views. Per AU:
// balance windows, CFS-select features on the balanced frames, standardize,
// then fit by L-BFGS. Deterministic given the seed.
inline ModelBundle train_all(const DatasetManifest& manifest, const ShapeModel& shape,
                             const RunConfig& cfg) {
  auto entries = select_training_views(manifest.partition("train"), cfg.training_views);
  auto seqs = detail::load_and_extract(manifest, entries, shape, cfg);

  ModelBundle bundle;
  struct Task {
    int au;
    bool occurrence;
  };
  std::vector<Task> tasks;
  for (int au : occurrence_aus()) tasks.push_back({au, true});
  for (int au : intensity_aus()) tasks.push_back({au, false});
  std::vector<AuModel> results(tasks.size());

  detail::parallel_for(static_cast<int>(tasks.size()), cfg.jobs, [&](int i) {
    const Task& task = tasks[i];
    auto windows = detail::build_windows(seqs, task.au, task.occurrence, cfg.window);
    std::uint64_t au_seed = cfg.seed * 1000003ULL + task.au * 2ULL + (task.occurrence ? 0 : 1);
    windows = balance(windows, au_seed);
    if (windows.empty())
      throw FeraError("train_all: no labeled training windows for AU" + std::to_string(task.au));

    // pooled frames of the balanced windows drive CFS + standardization
    int total = 0;
    for (const auto& w : windows) total += static_cast<int>(w.X.rows());
    Eigen::MatrixXd frames(total, kFeatureDim);
    std::vector<int> frame_labels(total);
    int r = 0;
    for (const auto& w : windows) {
      frames.block(r, 0, w.X.rows(), kFeatureDim) = w.X;
      std::copy(w.y.begin(), w.y.end(), frame_labels.begin() + r);
      r += static_cast<int>(w.X.rows());
    }

    AuModel m;
    m.kind = task.occurrence ? "crf" : "corf";
    m.au = task.au;
    m.selection = cfs_select(frames, frame_labels, cfg.cfs_patience);
    if (m.selection.selected_indices.empty())
      m.selection.selected_indices = {0};  // degenerate CFS fallback
    Eigen::MatrixXd sub = select_columns(frames, m.selection.selected_indices);
    m.standardizer = Standardizer::fit(sub);
    for (auto& w : windows)
      w.X = m.standardizer.apply(select_columns(w.X, m.selection.selected_indices));
    m.train_config = {cfg.l2, cfg.max_iter, cfg.tol, au_seed};
    if (task.occurrence)
      m.crf = train_crf(windows, m.train_config);
    else
      m.corf = train_corf(windows, m.train_config);
    results[i] = std::move(m);
  });

  for (size_t i = 0; i < tasks.size(); ++i) {
    auto& dst = tasks[i].occurrence ? bundle.occurrence : bundle.intensity;
    dst[tasks[i].au] = std::move(results[i]);
  }
  return bundle;
}

// Per-sequence, per-AU fused predictions for one manifest entry's features.
// View-blind: nothing here reads the entry's view id.
struct SequencePrediction {
  std::map<int, FusedPrediction> occurrence;
  std::map<int, FusedPrediction> intensity;
};

inline SequencePrediction predict_sequence(const Eigen::MatrixXd& features,
                                           const ModelBundle& bundle, const WindowSpec& spec) {
  SequencePrediction out;
  int T = static_cast<int>(features.rows());
  auto windows = segment(T, spec);
  auto run = [&](const AuModel& m) {
    Eigen::MatrixXd X = m.standardizer.apply(select_columns(features, m.selection.selected_indices));
    std::vector<WindowPrediction> preds;
    preds.reserve(windows.size());
    for (auto [start, end] : windows) {
      Eigen::MatrixXd win = X.block(start, 0, end - start, X.cols());
      preds.push_back(m.kind == "crf" ? decode_crf(m.crf, win) : decode_corf(m.corf, win));
    }
    return fuse(windows, preds, T);
  };
  for (int au : occurrence_aus()) {
    auto it = bundle.occurrence.find(au);
    if (it == bundle.occurrence.end())
      throw FeraError("predict: bundle is missing the occurrence model for AU" + std::to_string(au));
    out.occurrence[au] = run(it->second);
  }
  for (int au : intensity_aus()) {
    auto it = bundle.intensity.find(au);
    if (it == bundle.intensity.end())
      throw FeraError("predict: bundle is missing the intensity model for AU" + std::to_string(au));
    out.intensity[au] = run(it->second);
  }
  return out;
}

// Predict every entry of the requested partitions. Results are keyed by
// (subject, task, view) and deterministic regardless of entry order or jobs.
inline std::map<std::tuple<std::string, std::string, int>, SequencePrediction> predict_all(
    const DatasetManifest& manifest, const std::vector<ManifestEntry>& entries,
    const ShapeModel& shape, const ModelBundle& bundle, const RunConfig& cfg) {
  auto seqs = detail::load_and_extract(manifest, entries, shape, cfg);
  std::vector<SequencePrediction> preds(seqs.size());
  detail::parallel_for(static_cast<int>(seqs.size()), cfg.jobs, [&](int i) {
    preds[i] = predict_sequence(seqs[i].features, bundle, cfg.window);
  });
  std::map<std::tuple<std::string, std::string, int>, SequencePrediction> out;
  for (size_t i = 0; i < seqs.size(); ++i)
    out[{seqs[i].entry.subject, seqs[i].entry.task, seqs[i].entry.view}] = std::move(preds[i]);
  return out;
}

// ---- bundle serialization ----------------------------------------------------

namespace detail {

inline json au_model_to_json(const AuModel& m) {
  json j;
  j["kind"] = m.kind;
  j["au"] = m.au;
  j["selected_indices"] = m.selection.selected_indices;
  j["merit"] = m.selection.merit;
  j["standardizer_mean"] = std::vector<double>(m.standardizer.mean.data(),
                                               m.standardizer.mean.data() + m.standardizer.mean.size());
  j["standardizer_std"] = std::vector<double>(
      m.standardizer.stddev.data(), m.standardizer.stddev.data() + m.standardizer.stddev.size());
  j["train_config"] = {{"l2", m.train_config.l2},
                       {"max_iter", m.train_config.max_iter},
                       {"tol", m.train_config.tol},
                       {"seed", m.train_config.seed}};
  j["params"] = m.kind == "crf" ? crf_to_json(m.crf) : corf_to_json(m.corf);
  return j;
}

inline AuModel au_model_from_json(const json& j) {
  AuModel m;
  m.kind = j.at("kind").get<std::string>();
  m.au = j.at("au").get<int>();
  m.selection.selected_indices = j.at("selected_indices").get<std::vector<int>>();
  m.selection.merit = j.at("merit").get<double>();
  auto mean = j.at("standardizer_mean").get<std::vector<double>>();
  auto sd = j.at("standardizer_std").get<std::vector<double>>();
  m.standardizer.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<int>(mean.size()));
  m.standardizer.stddev = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<int>(sd.size()));
  const auto& tc = j.at("train_config");
  m.train_config = {tc.at("l2").get<double>(), tc.at("max_iter").get<int>(),
                    tc.at("tol").get<double>(), tc.at("seed").get<std::uint64_t>()};
  if (m.kind == "crf")
    m.crf = crf_from_json(j.at("params"));
  else
    m.corf = corf_from_json(j.at("params"));
  return m;
}

}  // namespace detail

inline void save_bundle(const std::filesystem::path& path, const ModelBundle& b) {
  json j;
  j["occurrence"] = json::array();
  for (const auto& [au, m] : b.occurrence) j["occurrence"].push_back(detail::au_model_to_json(m));
  j["intensity"] = json::array();
  for (const auto& [au, m] : b.intensity) j["intensity"].push_back(detail::au_model_to_json(m));
  std::ofstream out(path);
  if (!out) throw FeraError("cannot write model bundle: " + path.string());
  out << j.dump() << '\n';
}

inline ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FeraError("cannot open model bundle: " + path.string());
  json j;
  in >> j;
  ModelBundle b;
  for (const auto& jm : j.at("occurrence")) {
    AuModel m = detail::au_model_from_json(jm);
    b.occurrence[m.au] = std::move(m);
  }
  for (const auto& jm : j.at("intensity")) {
    AuModel m = detail::au_model_from_json(jm);
    b.intensity[m.au] = std::move(m);
  }
  return b;
}

// Prediction file: CSV per sequence, one row per frame, label columns then
// score columns.
inline void write_prediction(const std::filesystem::path& path, const SequencePrediction& p) {
  std::ofstream out(path);
  if (!out) throw FeraError("cannot write prediction file: " + path.string());
  bool first = true;
  for (int au : occurrence_aus()) {
    out << (first ? "" : ",") << "occ_AU" << au;
    first = false;
  }
  for (int au : intensity_aus()) out << ",int_AU" << au;
  for (int au : occurrence_aus()) out << ",score_occ_AU" << au;
  for (int au : intensity_aus()) out << ",score_int_AU" << au;
  out << '\n';
  int T = static_cast<int>(p.occurrence.begin()->second.labels.size());
  char buf[32];
  for (int t = 0; t < T; ++t) {
    first = true;
    for (int au : occurrence_aus()) {
      out << (first ? "" : ",") << p.occurrence.at(au).labels[t];
      first = false;
    }
    for (int au : intensity_aus()) out << ',' << p.intensity.at(au).labels[t];
    for (int au : occurrence_aus()) {
      std::snprintf(buf, sizeof buf, "%.9g", p.occurrence.at(au).scores[t]);
      out << ',' << buf;
    }
    for (int au : intensity_aus()) {
      std::snprintf(buf, sizeof buf, "%.9g", p.intensity.at(au).scores[t]);
      out << ',' << buf;
    }
    out << '\n';
  }
}

inline SequencePrediction load_prediction(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FeraError("cannot open prediction file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FeraError("empty prediction file: " + path.string());
  auto header = detail::split_csv_line(line);
  SequencePrediction p;
  std::vector<std::function<void(const std::string&)>> setters;
  for (const auto& h : header) {
    if (h.rfind("occ_AU", 0) == 0) {
      auto* f = &p.occurrence[std::stoi(h.substr(6))];
      setters.push_back([f](const std::string& s) { f->labels.push_back(std::stoi(s)); });
    } else if (h.rfind("int_AU", 0) == 0) {
      auto* f = &p.intensity[std::stoi(h.substr(6))];
      setters.push_back([f](const std::string& s) { f->labels.push_back(std::stoi(s)); });
    } else if (h.rfind("score_occ_AU", 0) == 0) {
      auto* f = &p.occurrence[std::stoi(h.substr(12))];
      setters.push_back([f](const std::string& s) { f->scores.push_back(std::stod(s)); });
    } else if (h.rfind("score_int_AU", 0) == 0) {
      auto* f = &p.intensity[std::stoi(h.substr(12))];
      setters.push_back([f](const std::string& s) { f->scores.push_back(std::stod(s)); });
    } else {
      throw FeraError(path.string() + ": unknown prediction column '" + h + "'");
    }
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != setters.size())
      throw FeraError(path.string() + ": prediction column count mismatch");
    for (size_t i = 0; i < cells.size(); ++i) setters[i](cells[i]);
  }
  return p;
}

}  // namespace fera
