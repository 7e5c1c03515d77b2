#pragma once

// Synthetic multiview landmark generator: AU-driven 3D face sequences,
// rotation through the 9-view pitch/yaw grid, orthographic projection, and
// interocular scale normalization. A desk-scale stand-in for the real
// multiview corpora, not a claim of anatomical fidelity.

#include <Eigen/Dense>
#include <random>

#include "fera/core.hpp"

namespace fera {

using Face3D = Eigen::Matrix<double, kNumLandmarks, 3>;  // x right, y down, z toward camera

struct ViewSpec {
  double pitch = 0.0;  // degrees
  double yaw = 0.0;
  int view_id = 0;
};

struct Face3DSequence {
  std::vector<Face3D> frames;
  std::map<int, std::vector<double>> activations;  // AU -> latent envelope per frame
  std::uint64_t subject_seed = 0;
};

struct TaskProfile {
  std::vector<int> aus = occurrence_aus();  // AUs that fire during the task
  int duration = 300;
  double noise = 0.25;        // per-frame 3D jitter (units)
  double amplitude = 1.0;     // multiplier on the per-AU displacement tables
  int events_per_au = 3;
};

// ---- 3D template -------------------------------------------------------------

// Neutral 66-point face, roughly 160 units wide, y growing downward,
// z positive toward the camera (nose tip most positive).
inline const Face3D& base_face() {
  static const Face3D face = [] {
    Face3D f;
    auto set = [&f](int i, double x, double y, double z) { f.row(i) << x, y, z; };
    const double pi = 3.14159265358979323846;
    for (int i = 0; i < 17; ++i) {  // jaw arc: ear to chin to ear
      double u = (i - 8) / 8.0;
      set(i, 80.0 * std::sin(u * pi / 2), 12.0 + 68.0 * std::cos(u * pi / 2),
          18.0 * std::cos(u * pi / 2) - 22.0 * std::abs(std::sin(u * pi / 2)));
    }
    for (int i = 0; i < 5; ++i) {  // left brow 17..21
      double u = i / 4.0;
      set(17 + i, -56.0 + 38.0 * u, -34.0 - 8.0 * std::sin(u * pi), 14.0 + 6.0 * std::sin(u * pi));
    }
    for (int i = 0; i < 5; ++i) {  // right brow 22..26
      double u = i / 4.0;
      set(22 + i, 18.0 + 38.0 * u, -34.0 - 8.0 * std::sin((1.0 - u) * pi), 14.0 + 6.0 * std::sin((1.0 - u) * pi));
    }
    // nose bridge 27..30 and nostril row 31..35
    set(27, 0.0, -22.0, 24.0);
    set(28, 0.0, -10.0, 30.0);
    set(29, 0.0, 2.0, 36.0);
    set(30, 0.0, 13.0, 42.0);
    set(31, -12.0, 22.0, 22.0);
    set(32, -6.0, 24.0, 26.0);
    set(33, 0.0, 25.0, 28.0);
    set(34, 6.0, 24.0, 26.0);
    set(35, 12.0, 22.0, 22.0);
    // left eye 36..41 (outer corner, two top, inner corner, two bottom)
    set(36, -45.0, -18.0, 6.0);
    set(37, -38.0, -22.0, 8.0);
    set(38, -30.0, -22.0, 8.0);
    set(39, -23.0, -18.0, 7.0);
    set(40, -30.0, -14.0, 8.0);
    set(41, -38.0, -14.0, 8.0);
    // right eye 42..47 (inner corner, two top, outer corner, two bottom)
    set(42, 23.0, -18.0, 7.0);
    set(43, 30.0, -22.0, 8.0);
    set(44, 38.0, -22.0, 8.0);
    set(45, 45.0, -18.0, 6.0);
    set(46, 38.0, -14.0, 8.0);
    set(47, 30.0, -14.0, 8.0);
    // outer mouth 48..59
    set(48, -26.0, 46.0, 18.0);
    set(49, -16.0, 41.0, 24.0);
    set(50, -6.0, 38.0, 27.0);
    set(51, 0.0, 39.0, 28.0);
    set(52, 6.0, 38.0, 27.0);
    set(53, 16.0, 41.0, 24.0);
    set(54, 26.0, 46.0, 18.0);
    set(55, 17.0, 52.0, 22.0);
    set(56, 7.0, 56.0, 25.0);
    set(57, 0.0, 57.0, 26.0);
    set(58, -7.0, 56.0, 25.0);
    set(59, -17.0, 52.0, 22.0);
    // inner mouth 60..65
    set(60, -10.0, 45.0, 24.0);
    set(61, 0.0, 44.0, 26.0);
    set(62, 10.0, 45.0, 24.0);
    set(63, 10.0, 48.0, 24.0);
    set(64, 0.0, 49.0, 25.0);
    set(65, -10.0, 48.0, 24.0);
    return f;
  }();
  return face;
}

// Unit-intensity 3D displacement field per AU. Bilaterally symmetric by
// construction so expression stays out of the mirror-antisymmetric (pose)
// subspace of a shape model trained with mirror augmentation.
inline Face3D au_displacement(int au) {
  Face3D d = Face3D::Zero();
  auto move = [&d](int i, double dx, double dy, double dz = 0.0) { d.row(i) << dx, dy, dz; };
  switch (au) {
    case 1:  // inner brow raiser
      move(20, 0, -2.4); move(21, 0, -3.2); move(22, 0, -3.2); move(23, 0, -2.4);
      break;
    case 4:  // brow lowerer, brows pulled down and together
      move(17, 0.6, 1.6); move(18, 0.8, 2.0); move(19, 1.0, 2.4); move(20, 1.2, 2.6); move(21, 1.4, 2.8);
      move(22, -1.4, 2.8); move(23, -1.2, 2.6); move(24, -1.0, 2.4); move(25, -0.8, 2.0); move(26, -0.6, 1.6);
      break;
    case 6:  // cheek raiser: outer eye corners and lip corners lifted, lower lids up
      move(36, 1.0, -3.4); move(45, -1.0, -3.4);
      move(39, -0.6, -1.6); move(42, 0.6, -1.6);
      move(40, 0, -1.4); move(41, 0, -1.4); move(46, 0, -1.4); move(47, 0, -1.4);
      move(48, -1.0, -2.2); move(54, 1.0, -2.2);
      break;
    case 7:  // lid tightener, eye aperture narrows
      move(37, 0, 1.6); move(38, 0, 1.6); move(43, 0, 1.6); move(44, 0, 1.6);
      move(40, 0, -1.6); move(41, 0, -1.6); move(46, 0, -1.6); move(47, 0, -1.6);
      break;
    case 10:  // upper lip raiser
      move(49, 0, -3.2); move(50, 0, -3.8); move(51, 0, -3.8); move(52, 0, -3.8); move(53, 0, -3.2);
      move(60, 0, -2.6); move(61, 0, -2.8); move(62, 0, -2.6);
      break;
    case 12:  // lip corner puller
      move(48, -3.0, -2.6); move(54, 3.0, -2.6);
      move(49, -1.2, -1.2); move(53, 1.2, -1.2); move(55, 1.2, -1.0); move(59, -1.2, -1.0);
      break;
    case 14:  // dimpler: corners straight out, lips pressed together
      move(48, -2.8, 0); move(54, 2.8, 0); move(49, -1.0, 0); move(53, 1.0, 0);
      move(50, 0, 0.9); move(51, 0, 1.0); move(52, 0, 0.9);
      break;
    case 15:  // lip corner depressor
      move(48, -1.2, 3.6); move(54, 1.2, 3.6); move(55, 0.5, 1.8); move(59, -0.5, 1.8);
      break;
    case 17:  // chin raiser, lower lip and chin pushed up
      move(55, 0, -1.8); move(56, 0, -2.4); move(57, 0, -2.6); move(58, 0, -2.4); move(59, 0, -1.8);
      move(63, 0, -1.4); move(64, 0, -1.6); move(65, 0, -1.4);
      move(7, 0, -1.6); move(8, 0, -2.0); move(9, 0, -1.6);
      break;
    case 23:  // lip tightener, mouth narrows
      move(48, 2.6, 0); move(54, -2.6, 0); move(49, 1.4, 0); move(53, -1.4, 0);
      move(55, -1.4, 0); move(59, 1.4, 0); move(60, 1.0, 0); move(62, -1.0, 0);
      move(63, -1.0, 0); move(65, 1.0, 0);
      break;
    default:
      throw FeraError("au_displacement: unsupported AU" + std::to_string(au));
  }
  return d;
}

namespace detail {

// Smooth onset-apex-offset pulse in [0, 1].
inline double envelope_pulse(int t, int start, int onset, int apex, int offset) {
  const double pi = 3.14159265358979323846;
  int u = t - start;
  if (u < 0 || u >= onset + apex + offset) return 0.0;
  if (u < onset) return 0.5 * (1.0 - std::cos(pi * u / onset));
  if (u < onset + apex) return 1.0;
  return 0.5 * (1.0 - std::cos(pi * (onset + apex + offset - u) / offset));
}

}  // namespace detail

// AU-driven 3D sequence + ground-truth labels. Deterministic given seeds.
// Intensity label = quantized envelope (round), occurrence = intensity >= 1.
inline std::pair<Face3DSequence, AULabels> generate(std::uint64_t subject_seed,
                                                    const TaskProfile& profile,
                                                    std::uint64_t task_seed) {
  if (profile.duration < 1) throw FeraError("generate: duration must be >= 1");
  Face3DSequence seq;
  seq.subject_seed = subject_seed;

  // per-subject shape perturbation: global width/height jitter + fixed offsets
  std::mt19937_64 srng(subject_seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  double wx = 1.0 + 0.06 * nd(srng), wy = 1.0 + 0.06 * nd(srng), wz = 1.0 + 0.08 * nd(srng);
  Face3D subject = base_face();
  for (int i = 0; i < kNumLandmarks; ++i) {
    subject(i, 0) = subject(i, 0) * wx + 1.2 * nd(srng);
    subject(i, 1) = subject(i, 1) * wy + 1.2 * nd(srng);
    subject(i, 2) = subject(i, 2) * wz + 1.2 * nd(srng);
  }

  const int T = profile.duration;
  std::mt19937_64 trng(task_seed);
  std::uniform_int_distribution<int> level_dist(1, 5);
  // Occupancy-aware scheduling: retry event placement while more than
  // max_concurrent AUs would be active at once, so individual AU signatures
  // stay separable the way they are in posed recordings.
  const int max_concurrent = 3;
  std::vector<int> occupancy(T, 0);
  for (int au : profile.aus) {
    std::vector<double>& env = seq.activations[au];
    env.assign(T, 0.0);
    for (int e = 0; e < profile.events_per_au; ++e) {
      int onset = 6 + static_cast<int>(trng() % 6);
      int apex = 20 + static_cast<int>(trng() % 21);
      int offset = 6 + static_cast<int>(trng() % 6);
      int span = onset + apex + offset;
      int start = 0;
      for (int attempt = 0; attempt < 64; ++attempt) {
        start = static_cast<int>(trng() % std::max(1, T - span));
        int worst = 0;
        for (int t = start; t < std::min(T, start + span); ++t)
          worst = std::max(worst, occupancy[t]);
        if (worst < max_concurrent) break;
      }
      for (int t = start; t < std::min(T, start + span); ++t) occupancy[t]++;
      double level = level_dist(trng);
      for (int t = 0; t < T; ++t)
        env[t] = std::max(env[t], level * detail::envelope_pulse(t, start, onset, apex, offset));
    }
  }

  AULabels labels;
  for (int au : occurrence_aus()) labels.occurrence[au].assign(T, 0);
  for (int au : intensity_aus()) labels.intensity[au].assign(T, 0);

  seq.frames.resize(T);
  for (int t = 0; t < T; ++t) {
    Face3D f = subject;
    for (const auto& [au, env] : seq.activations) {
      if (env[t] > 0) f += env[t] * profile.amplitude * au_displacement(au);
      int q = std::clamp(static_cast<int>(std::lround(env[t])), 0, 5);
      if (labels.occurrence.count(au)) labels.occurrence[au][t] = q >= 1 ? 1 : 0;
      if (labels.intensity.count(au)) labels.intensity[au][t] = q;
    }
    if (profile.noise > 0) {
      for (int i = 0; i < kNumLandmarks; ++i)
        for (int d = 0; d < 3; ++d) f(i, d) += profile.noise * nd(trng);
    }
    seq.frames[t] = f;
  }
  return {std::move(seq), std::move(labels)};
}

// Rotation: pitch about the x axis first, then yaw about the y axis,
// face-centered axes.
inline Eigen::Matrix3d view_rotation(const ViewSpec& view) {
  const double deg = 3.14159265358979323846 / 180.0;
  double p = view.pitch * deg, y = view.yaw * deg;
  Eigen::Matrix3d rp, ry;
  rp << 1, 0, 0, 0, std::cos(p), -std::sin(p), 0, std::sin(p), std::cos(p);
  ry << std::cos(y), 0, std::sin(y), 0, 1, 0, -std::sin(y), 0, std::cos(y);
  return ry * rp;
}

inline double interocular_distance(const Shape& s) {
  Point2 l{0, 0}, r{0, 0};
  for (int i = 36; i <= 41; ++i) {
    l[0] += s[i][0] / 6.0;
    l[1] += s[i][1] / 6.0;
  }
  for (int i = 42; i <= 47; ++i) {
    r[0] += s[i][0] / 6.0;
    r[1] += s[i][1] / 6.0;
  }
  return std::hypot(l[0] - r[0], l[1] - r[1]);
}

// Rotate, orthographically project, centre, and scale. `scale` is the
// dataset-level normalization factor (units per model unit) chosen so that
// the dataset-average interocular distance maps to 100.
inline LandmarkSequence render_view(const Face3DSequence& seq3d, const ViewSpec& view,
                                    double scale = 1.0) {
  LandmarkSequence out;
  out.view_id = view.view_id;
  Eigen::Matrix3d rot = view_rotation(view);
  for (const auto& f3 : seq3d.frames) {
    Face3D r = f3 * rot.transpose();
    LandmarkFrame frame;
    double cx = r.col(0).mean(), cy = r.col(1).mean();
    for (int i = 0; i < kNumLandmarks; ++i)
      frame.points[i] = {scale * (r(i, 0) - cx), scale * (r(i, 1) - cy)};
    out.frames.push_back(frame);
  }
  return out;
}

// Frontal-projection mean interocular distance of a 3D sequence, the basis
// of the dataset-level normalization.
inline double mean_frontal_interocular(const Face3DSequence& seq3d) {
  LandmarkSequence frontal = render_view(seq3d, ViewSpec{0, 0, 0}, 1.0);
  double s = 0;
  for (const auto& f : frontal.frames) s += interocular_distance(f.points);
  return s / frontal.frames.size();
}

// ---- dataset emission ----------------------------------------------------------

struct SynthConfig {
  int n_train_subjects = 6;
  int n_dev_subjects = 2;
  int n_test_subjects = 2;
  int n_tasks = 1;
  TaskProfile profile;
  std::uint64_t seed = 1;
  double occlusion_rate = 0.0;  // tracking-failure probability at the extreme views
  std::map<int, std::pair<double, double>> view_order = default_view_order();
  double target_interocular = 100.0;
};

inline SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  c.n_train_subjects = j.value("n_train_subjects", c.n_train_subjects);
  c.n_dev_subjects = j.value("n_dev_subjects", c.n_dev_subjects);
  c.n_test_subjects = j.value("n_test_subjects", c.n_test_subjects);
  c.n_tasks = j.value("n_tasks", c.n_tasks);
  c.seed = j.value("seed", c.seed);
  c.occlusion_rate = j.value("occlusion_rate", c.occlusion_rate);
  c.profile.duration = j.value("duration", c.profile.duration);
  c.profile.noise = j.value("noise", c.profile.noise);
  c.profile.amplitude = j.value("amplitude", c.profile.amplitude);
  c.profile.events_per_au = j.value("events_per_au", c.profile.events_per_au);
  if (j.contains("aus")) c.profile.aus = j.at("aus").get<std::vector<int>>();
  if (j.contains("view_order")) {
    c.view_order.clear();
    for (auto& [k, v] : j.at("view_order").items())
      c.view_order[std::stoi(k)] = {v.at(0).get<double>(), v.at(1).get<double>()};
  }
  return c;
}

// Generate every (subject, task), render all 9 views, write landmark and
// label CSVs plus the manifest. Subjects are disjoint across partitions.
// Returns the manifest path.
inline std::filesystem::path emit_dataset(const SynthConfig& cfg,
                                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  struct Item {
    std::string subject, task, partition;
    Face3DSequence seq3d;
    AULabels labels;
  };
  std::vector<Item> items;
  int subject_no = 0;
  auto add_subjects = [&](const std::string& partition, int count) {
    for (int s = 0; s < count; ++s) {
      ++subject_no;
      char sid[16];
      std::snprintf(sid, sizeof sid, "S%03d", subject_no);
      for (int t = 1; t <= cfg.n_tasks; ++t) {
        Item item;
        item.subject = sid;
        item.task = "T" + std::to_string(t);
        item.partition = partition;
        std::uint64_t subj_seed = cfg.seed * 7919ULL + subject_no;
        std::uint64_t task_seed = cfg.seed * 104729ULL + subject_no * 131ULL + t;
        TaskProfile profile = cfg.profile;
        auto [seq3d, labels] = generate(subj_seed, profile, task_seed);
        item.seq3d = std::move(seq3d);
        item.labels = std::move(labels);
        items.push_back(std::move(item));
      }
    }
  };
  add_subjects("train", cfg.n_train_subjects);
  add_subjects("development", cfg.n_dev_subjects);
  add_subjects("test", cfg.n_test_subjects);

  double mean_iod = 0;
  for (const auto& it : items) mean_iod += mean_frontal_interocular(it.seq3d);
  mean_iod /= items.size();
  double scale = cfg.target_interocular / mean_iod;

  DatasetManifest manifest;
  manifest.view_order = cfg.view_order;
  manifest.root = std::filesystem::absolute(out_dir);

  std::mt19937_64 occ_rng(cfg.seed * 31337ULL + 7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& it : items) {
    std::string labels_name = it.subject + "_" + it.task + "_labels.csv";
    write_labels(out_dir / labels_name, it.labels);
    for (const auto& [view_id, py] : cfg.view_order) {
      ViewSpec view{py.first, py.second, view_id};
      LandmarkSequence seq = render_view(it.seq3d, view, scale);
      seq.subject_id = it.subject;
      seq.task_id = it.task;
      if (cfg.occlusion_rate > 0) {
        double p = cfg.occlusion_rate * (std::abs(view.pitch) + std::abs(view.yaw)) / 80.0;
        for (auto& f : seq.frames)
          if (unif(occ_rng) < p) f = LandmarkFrame{.points = {}, .tracked = false};
      }
      std::string seq_name = it.subject + "_" + it.task + "_v" + std::to_string(view_id) + ".csv";
      write_sequence(out_dir / seq_name, seq);
      manifest.entries.push_back(
          {seq_name, labels_name, it.subject, it.task, view_id, it.partition});
    }
  }
  auto manifest_path = out_dir / "manifest.json";
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace fera
