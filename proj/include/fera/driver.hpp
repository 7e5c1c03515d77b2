#pragma once

// End-to-end run steps shared by the CLI and the test harness: each step
// reads and writes files, so identical configs produce identical artifacts.

#include "fera/metrics.hpp"
#include "fera/pipeline.hpp"
#include "fera/synth.hpp"

namespace fera {

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  std::vector<std::string> errors;
  auto get = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    } catch (const json::exception& e) {
      errors.push_back(std::string("config field '") + key + "': " + e.what());
    }
  };
  int length = c.window.length, stride = c.window.stride;
  if (j.contains("window")) {
    length = j.at("window").value("length", length);
    stride = j.at("window").value("stride", stride);
  }
  c.window = {length, stride};
  if (j.contains("training_views")) {
    c.training_views.clear();
    for (int v : j.at("training_views").get<std::vector<int>>()) c.training_views.insert(v);
  }
  get("seed", c.seed);
  get("l2", c.l2);
  get("tol", c.tol);
  get("max_iter", c.max_iter);
  get("cfs_patience", c.cfs_patience);
  get("stable_points", c.stable_points);
  get("jobs", c.jobs);
  if (c.window.stride < 1 || c.window.stride > c.window.length)
    errors.push_back("window: stride must be in [1, length]");
  if (c.training_views.empty()) errors.push_back("training_views: must be non-empty");
  for (int v : c.training_views)
    if (v < 1 || v > 9) errors.push_back("training_views: view " + std::to_string(v) + " out of 1..9");
  if (c.l2 < 0) errors.push_back("l2: must be >= 0");
  if (c.stable_points.empty()) errors.push_back("stable_points: must be non-empty");
  for (int p : c.stable_points)
    if (p < 1 || p > kNumInner)
      errors.push_back("stable_points: point " + std::to_string(p) + " out of 1..49");
  if (!errors.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw FeraError(msg);
  }
  return c;
}

// ---- steps --------------------------------------------------------------------

inline std::filesystem::path run_synth(const json& synth_cfg, const std::filesystem::path& out_dir) {
  return emit_dataset(synth_config_from_json(synth_cfg), out_dir);
}

// Shape corpus: tracked frames of the train partition (all views),
// subsampled for speed, with mirror augmentation inside the trainer.
inline ShapeModel run_train_shape(const DatasetManifest& manifest,
                                  const std::filesystem::path& out_path, int frame_step = 3,
                                  int n_components = 20) {
  std::vector<Shape> corpus;
  for (const auto& e : manifest.partition("train")) {
    auto seq = load_sequence(manifest.resolve(e.sequence_path));
    for (int t = 0; t < seq.size(); t += frame_step)
      if (seq.frames[t].tracked) corpus.push_back(seq.frames[t].points);
  }
  ShapeModel model = train_shape_model(corpus, n_components);
  save_shape_model(out_path, model);
  return model;
}

inline void run_extract(const DatasetManifest& manifest, const ShapeModel& shape,
                        const RunConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& e : manifest.entries) {
    auto seq = load_sequence(manifest.resolve(e.sequence_path));
    Eigen::MatrixXd X = extract(seq, shape, cfg.stable_points);
    std::string stem = e.subject + "_" + e.task + "_v" + std::to_string(e.view);
    write_feature_matrix(out_dir / (stem + ".csv"), X);
  }
  json sidecar;
  sidecar["blocks"] = {{"expr", kExprDim},
                       {"delta_expr", kExprDim},
                       {"group", kGroupDim},
                       {"median", kMedianDim}};
  sidecar["stable_points"] = cfg.stable_points;
  std::ofstream out(out_dir / "features.json");
  out << sidecar.dump(2) << '\n';
}

inline ModelBundle run_train(const DatasetManifest& manifest, const ShapeModel& shape,
                             const RunConfig& cfg, const std::filesystem::path& bundle_path) {
  ModelBundle bundle = train_all(manifest, shape, cfg);
  save_bundle(bundle_path, bundle);
  return bundle;
}

inline std::string prediction_stem(const ManifestEntry& e) {
  return e.subject + "_" + e.task + "_v" + std::to_string(e.view);
}

inline void run_predict(const DatasetManifest& manifest,
                        const std::vector<ManifestEntry>& entries, const ShapeModel& shape,
                        const ModelBundle& bundle, const RunConfig& cfg,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto preds = predict_all(manifest, entries, shape, bundle, cfg);
  for (const auto& e : entries) {
    const auto& p = preds.at({e.subject, e.task, e.view});
    write_prediction(out_dir / (prediction_stem(e) + ".pred.csv"), p);
  }
}

// ---- evaluation ------------------------------------------------------------------

struct EvaluationReport {
  std::string partition;
  ScoreTable occ_f1, occ_acc, occ_2afc;
  ScoreTable int_rmse, int_pcc, int_icc;
  ScoreTable int_icc_literal;  // paper-literal formula, comparison only
  std::map<int, ScoreTable> view_occ_f1, view_occ_acc;
  std::map<int, ScoreTable> view_int_rmse, view_int_icc;
  std::map<int, double> detected_pct;       // per view
  std::map<int, double> chance_rmse_per_au; // intensity AUs, train majority class
};

namespace detail {

struct EvalTracks {
  // per AU: concatenable scored tracks, overall and per view
  std::map<int, std::vector<ScoredTrack>> occ, intens;
  std::map<int, std::map<int, std::vector<ScoredTrack>>> occ_by_view, intens_by_view;
  std::map<int, long> tracked_frames, total_frames;  // per view
};

inline EvalTracks collect_tracks(const DatasetManifest& manifest,
                                 const std::vector<ManifestEntry>& entries,
                                 const std::filesystem::path& pred_dir) {
  EvalTracks et;
  for (const auto& e : entries) {
    auto seq = load_sequence(manifest.resolve(e.sequence_path));
    auto labels = load_labels(manifest.resolve(e.labels_path), seq.size());
    auto pred = load_prediction(pred_dir / (prediction_stem(e) + ".pred.csv"));
    if (!pred.occurrence.empty() &&
        static_cast<int>(pred.occurrence.begin()->second.labels.size()) != seq.size())
      throw FeraError("prediction length mismatch for " + prediction_stem(e));
    for (auto& f : seq.frames) {
      et.total_frames[e.view]++;
      if (f.tracked) et.tracked_frames[e.view]++;
    }
    auto make_track = [](const std::vector<int>& y, const FusedPrediction& p) {
      ScoredTrack t;
      for (size_t i = 0; i < y.size(); ++i) {
        if (y[i] == kUnlabeled) continue;  // unlabeled frames are not scored
        t.y.push_back(y[i]);
        t.yhat.push_back(p.labels[i]);
        t.score.push_back(p.scores[i]);
      }
      return t;
    };
    for (int au : occurrence_aus()) {
      ScoredTrack t = make_track(labels.occurrence.at(au), pred.occurrence.at(au));
      et.occ[au].push_back(t);
      et.occ_by_view[e.view][au].push_back(std::move(t));
    }
    for (int au : intensity_aus()) {
      ScoredTrack t = make_track(labels.intensity.at(au), pred.intensity.at(au));
      et.intens[au].push_back(t);
      et.intens_by_view[e.view][au].push_back(std::move(t));
    }
  }
  return et;
}

}  // namespace detail

// Per-AU training-set majority class, the chance predictor of the report.
inline std::map<int, int> train_majority_class(const DatasetManifest& manifest) {
  std::map<int, std::map<int, long>> counts;
  for (const auto& e : manifest.partition("train")) {
    auto seq = load_sequence(manifest.resolve(e.sequence_path));
    auto labels = load_labels(manifest.resolve(e.labels_path), seq.size());
    for (int au : intensity_aus())
      for (int v : labels.intensity.at(au))
        if (v != kUnlabeled) counts[au][v]++;
  }
  std::map<int, int> majority;
  for (int au : intensity_aus()) {
    int best = 0;
    long best_n = -1;
    for (const auto& [c, n] : counts[au])
      if (n > best_n) {
        best = c;
        best_n = n;
      }
    majority[au] = best;
  }
  return majority;
}

inline EvaluationReport evaluate_partition(const DatasetManifest& manifest,
                                           const std::string& partition,
                                           const std::filesystem::path& pred_dir) {
  auto entries = manifest.partition(partition);
  if (entries.empty()) throw FeraError("evaluate: no entries in partition " + partition);
  auto et = detail::collect_tracks(manifest, entries, pred_dir);

  EvaluationReport r;
  r.partition = partition;
  r.occ_f1 = challenge_score(et.occ, Measure::F1, occurrence_aus());
  r.occ_acc = challenge_score(et.occ, Measure::ACC, occurrence_aus());
  r.occ_2afc = challenge_score(et.occ, Measure::AFC2, occurrence_aus());
  r.int_rmse = challenge_score(et.intens, Measure::RMSE, intensity_aus());
  r.int_pcc = challenge_score(et.intens, Measure::PCC, intensity_aus());
  r.int_icc = challenge_score(et.intens, Measure::ICC, intensity_aus());
  {
    std::map<int, std::optional<double>> lit;
    for (int au : intensity_aus()) {
      std::vector<double> y, yh;
      for (const auto& t : et.intens[au]) {
        for (int v : t.y) y.push_back(v);
        for (int v : t.yhat) yh.push_back(v);
      }
      lit[au] = icc_paper_literal(y, yh);
    }
    r.int_icc_literal = ScoreTable::from_per_au(Measure::ICC, lit);
  }
  for (const auto& [view, tracks] : et.occ_by_view) {
    r.view_occ_f1[view] = challenge_score(tracks, Measure::F1, occurrence_aus());
    r.view_occ_acc[view] = challenge_score(tracks, Measure::ACC, occurrence_aus());
  }
  for (const auto& [view, tracks] : et.intens_by_view) {
    r.view_int_rmse[view] = challenge_score(tracks, Measure::RMSE, intensity_aus());
    r.view_int_icc[view] = challenge_score(tracks, Measure::ICC, intensity_aus());
  }
  for (const auto& [view, total] : et.total_frames)
    r.detected_pct[view] = 100.0 * et.tracked_frames[view] / total;

  auto majority = train_majority_class(manifest);
  for (int au : intensity_aus()) {
    std::vector<double> y;
    for (const auto& t : et.intens[au])
      for (int v : t.y) y.push_back(v);
    r.chance_rmse_per_au[au] = chance_rmse(y, majority[au]);
  }
  return r;
}

// ---- report serialization + rendering -----------------------------------------

namespace detail {

inline json table_to_json(const ScoreTable& t) {
  json j;
  j["measure"] = measure_name(t.measure);
  json per_au = json::object();
  for (const auto& [au, v] : t.per_au)
    per_au[std::to_string(au)] = v ? json(*v) : json(nullptr);
  j["per_au"] = per_au;
  j["mean"] = t.mean ? json(*t.mean) : json(nullptr);
  j["n_na"] = t.n_na;
  return j;
}

inline ScoreTable table_from_json(const json& j) {
  ScoreTable t;
  std::string m = j.at("measure").get<std::string>();
  for (Measure mm : {Measure::F1, Measure::ACC, Measure::AFC2, Measure::RMSE, Measure::PCC,
                     Measure::ICC})
    if (measure_name(mm) == m) t.measure = mm;
  for (auto& [k, v] : j.at("per_au").items())
    t.per_au[std::stoi(k)] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
  t.mean = j.at("mean").is_null() ? std::nullopt : std::optional<double>(j.at("mean").get<double>());
  t.n_na = j.at("n_na").get<int>();
  return t;
}

}  // namespace detail

inline json report_to_json(const EvaluationReport& r) {
  json j;
  j["partition"] = r.partition;
  j["occurrence"] = {{"F1", detail::table_to_json(r.occ_f1)},
                     {"Accuracy", detail::table_to_json(r.occ_acc)},
                     {"2AFC", detail::table_to_json(r.occ_2afc)}};
  j["intensity"] = {{"RMSE", detail::table_to_json(r.int_rmse)},
                    {"PCC", detail::table_to_json(r.int_pcc)},
                    {"ICC", detail::table_to_json(r.int_icc)},
                    {"ICC_literal", detail::table_to_json(r.int_icc_literal)}};
  auto views = [&](const std::map<int, ScoreTable>& m) {
    json o = json::object();
    for (const auto& [v, t] : m) o[std::to_string(v)] = detail::table_to_json(t);
    return o;
  };
  j["per_view"] = {{"occ_F1", views(r.view_occ_f1)},
                   {"occ_Accuracy", views(r.view_occ_acc)},
                   {"int_RMSE", views(r.view_int_rmse)},
                   {"int_ICC", views(r.view_int_icc)}};
  json det = json::object();
  for (const auto& [v, pct] : r.detected_pct) det[std::to_string(v)] = pct;
  j["detected_pct"] = det;
  json chance = json::object();
  for (const auto& [au, v] : r.chance_rmse_per_au) chance[std::to_string(au)] = v;
  j["chance_rmse"] = chance;
  return j;
}

inline EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  r.partition = j.at("partition").get<std::string>();
  r.occ_f1 = detail::table_from_json(j.at("occurrence").at("F1"));
  r.occ_acc = detail::table_from_json(j.at("occurrence").at("Accuracy"));
  r.occ_2afc = detail::table_from_json(j.at("occurrence").at("2AFC"));
  r.int_rmse = detail::table_from_json(j.at("intensity").at("RMSE"));
  r.int_pcc = detail::table_from_json(j.at("intensity").at("PCC"));
  r.int_icc = detail::table_from_json(j.at("intensity").at("ICC"));
  r.int_icc_literal = detail::table_from_json(j.at("intensity").at("ICC_literal"));
  auto views = [&](const json& o, std::map<int, ScoreTable>& m) {
    for (auto& [k, v] : o.items()) m[std::stoi(k)] = detail::table_from_json(v);
  };
  views(j.at("per_view").at("occ_F1"), r.view_occ_f1);
  views(j.at("per_view").at("occ_Accuracy"), r.view_occ_acc);
  views(j.at("per_view").at("int_RMSE"), r.view_int_rmse);
  views(j.at("per_view").at("int_ICC"), r.view_int_icc);
  for (auto& [k, v] : j.at("detected_pct").items()) r.detected_pct[std::stoi(k)] = v.get<double>();
  for (auto& [k, v] : j.at("chance_rmse").items())
    r.chance_rmse_per_au[std::stoi(k)] = v.get<double>();
  return r;
}

// Table layouts mirroring the challenge report: AUs as rows, measures or
// views as columns, mean row last.
inline std::vector<ReportGrid> report_grids(const EvaluationReport& r) {
  std::vector<ReportGrid> grids;
  auto add_overall = [&](const std::string& title, const std::vector<int>& aus,
                         std::vector<std::pair<std::string, const ScoreTable*>> tables) {
    ReportGrid g;
    g.title = title + " (" + r.partition + ")";
    for (const auto& [name, t] : tables) g.columns.push_back(name);
    for (int au : aus) {
      std::vector<std::optional<double>> row;
      for (const auto& [name, t] : tables) row.push_back(t->per_au.at(au));
      g.rows.push_back({"AU" + std::to_string(au), row});
    }
    std::vector<std::optional<double>> means;
    for (const auto& [name, t] : tables) means.push_back(t->mean);
    g.rows.push_back({"Mean", means});
    grids.push_back(std::move(g));
  };
  add_overall("Occurrence sub-challenge", occurrence_aus(),
              {{"F1", &r.occ_f1}, {"2AFC", &r.occ_2afc}, {"Accuracy", &r.occ_acc}});
  add_overall("Intensity sub-challenge", intensity_aus(),
              {{"RMSE", &r.int_rmse}, {"PCC", &r.int_pcc}, {"ICC", &r.int_icc}});

  auto add_per_view = [&](const std::string& title, const std::vector<int>& aus,
                          const std::map<int, ScoreTable>& views, bool with_chance) {
    ReportGrid g;
    g.title = title + " per view (" + r.partition + ")";
    if (with_chance) g.columns.push_back("Chance");
    for (const auto& [v, t] : views) g.columns.push_back("View " + std::to_string(v));
    {
      std::vector<std::optional<double>> det;
      if (with_chance) det.push_back(std::nullopt);
      for (const auto& [v, t] : views) {
        auto it = r.detected_pct.find(v);
        det.push_back(it == r.detected_pct.end() ? std::nullopt
                                                 : std::optional<double>(it->second));
      }
      g.rows.push_back({"% Detected frames", det});
    }
    for (int au : aus) {
      std::vector<std::optional<double>> row;
      if (with_chance) {
        auto it = r.chance_rmse_per_au.find(au);
        row.push_back(it == r.chance_rmse_per_au.end() ? std::nullopt
                                                       : std::optional<double>(it->second));
      }
      for (const auto& [v, t] : views) row.push_back(t.per_au.at(au));
      g.rows.push_back({"AU" + std::to_string(au), row});
    }
    std::vector<std::optional<double>> means;
    if (with_chance) means.push_back(std::nullopt);
    for (const auto& [v, t] : views) means.push_back(t.mean);
    g.rows.push_back({"Mean", means});
    grids.push_back(std::move(g));
  };
  add_per_view("Occurrence F1", occurrence_aus(), r.view_occ_f1, false);
  add_per_view("Occurrence Accuracy", occurrence_aus(), r.view_occ_acc, false);
  add_per_view("Intensity RMSE", intensity_aus(), r.view_int_rmse, true);
  add_per_view("Intensity ICC", intensity_aus(), r.view_int_icc, false);
  return grids;
}

inline void run_evaluate(const DatasetManifest& manifest, const std::string& partition,
                         const std::filesystem::path& pred_dir,
                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  EvaluationReport r = evaluate_partition(manifest, partition, pred_dir);
  std::ofstream out(out_dir / ("scores_" + partition + ".json"));
  if (!out) throw FeraError("cannot write evaluation output");
  out << report_to_json(r).dump(2) << '\n';
}

inline void run_report(const std::filesystem::path& scores_json,
                       const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ifstream in(scores_json);
  if (!in) throw FeraError("cannot open scores file: " + scores_json.string());
  json j;
  in >> j;
  EvaluationReport r = report_from_json(j);
  std::string md;
  std::string csv;
  for (const auto& g : report_grids(r)) {
    md += render_markdown(g);
    csv += g.title + "\n" + render_csv(g) + "\n";
  }
  std::ofstream mdo(out_dir / ("report_" + r.partition + ".md"));
  mdo << md;
  std::ofstream csvo(out_dir / ("report_" + r.partition + ".csv"));
  csvo << csv;
}

}  // namespace fera
