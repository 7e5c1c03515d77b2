#pragma once

// The 158-dimensional per-frame geometric descriptor
// [expr(19) | delta_expr(19) | group distances+angles(71) | median distances(49)]
// and correlation-based feature selection.

#include <Eigen/Dense>
#include <algorithm>
#include <vector>

#include "fera/shape.hpp"

namespace fera {

constexpr int kExprDim = 19;
constexpr int kGroupDim = 71;
constexpr int kMedianDim = 49;
constexpr int kFeatureDim = kExprDim + kExprDim + kGroupDim + kMedianDim;  // 158

// Feature groups in inner-49 indexing (1-based): left eye + left eyebrow,
// right eye + right eyebrow, mouth. Points are taken in the listed order.
inline const std::vector<std::vector<int>>& feature_groups() {
  static const std::vector<std::vector<int>> g = [] {
    std::vector<std::vector<int>> v(3);
    for (int i = 20; i <= 25; ++i) v[0].push_back(i);  // left eye
    for (int i = 1; i <= 5; ++i) v[0].push_back(i);    // left eyebrow
    for (int i = 26; i <= 31; ++i) v[1].push_back(i);  // right eye
    for (int i = 6; i <= 10; ++i) v[1].push_back(i);   // right eyebrow
    for (int i = 32; i <= 49; ++i) v[2].push_back(i);  // mouth
    return v;
  }();
  return g;
}

// Nose points: near-rigid under expression and not used by any group.
inline const std::vector<int>& default_stable_points() {
  static const std::vector<int> v{11, 12, 13, 14, 15, 16, 17, 18, 19};
  return v;
}

inline Eigen::VectorXd expr_features(const Frontalized& f) { return f.expr; }

inline Eigen::VectorXd delta_features(const Eigen::VectorXd& expr_t,
                                      const Eigen::VectorXd& expr_prev, bool is_first_frame) {
  return is_first_frame ? expr_t : Eigen::VectorXd(expr_t - expr_prev);
}

namespace detail {

inline double sq_dist(const Point2& a, const Point2& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

// Angle at the middle point p2 between the segments p2-p1 and p2-p3, law of
// cosines with the argument clamped to [-1, 1]. Zero-length segments give 0.
inline double triplet_angle(const Point2& p1, const Point2& p2, const Point2& p3) {
  double d21 = std::sqrt(sq_dist(p2, p1));
  double d23 = std::sqrt(sq_dist(p2, p3));
  double d13sq = sq_dist(p1, p3);
  if (d21 < 1e-12 || d23 < 1e-12) return 0.0;
  double cosv = (d21 * d21 + d23 * d23 - d13sq) / (2.0 * d21 * d23);
  return std::acos(std::clamp(cosv, -1.0, 1.0));
}

}  // namespace detail

// Per group: consecutive squared distances, then consecutive-triplet angles.
// Group sizes 11/11/18 give 10+9, 10+9, 17+16 = 71 features.
inline Eigen::VectorXd group_features(const Shape& points) {
  Eigen::VectorXd out(kGroupDim);
  int k = 0;
  for (const auto& group : feature_groups()) {
    int np = static_cast<int>(group.size());
    std::vector<Point2> p(np);
    for (int i = 0; i < np; ++i) p[i] = points[inner_to_global(group[i])];
    for (int i = 0; i + 1 < np; ++i) out[k++] = detail::sq_dist(p[i], p[i + 1]);
    for (int i = 0; i + 2 < np; ++i) out[k++] = detail::triplet_angle(p[i], p[i + 1], p[i + 2]);
  }
  return out;
}

// Euclidean distance from every inner point to the coordinate-wise median
// of the stable point set.
inline Eigen::VectorXd median_distance_features(const Shape& points,
                                                const std::vector<int>& stable_set) {
  if (stable_set.empty()) throw FeraError("median_distance_features: empty stable set");
  std::vector<double> xs, ys;
  for (int i : stable_set) {
    xs.push_back(points[inner_to_global(i)][0]);
    ys.push_back(points[inner_to_global(i)][1]);
  }
  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  Point2 m{median(xs), median(ys)};
  Eigen::VectorXd out(kMedianDim);
  for (int i = 1; i <= kNumInner; ++i)
    out[i - 1] = std::sqrt(detail::sq_dist(points[inner_to_global(i)], m));
  return out;
}

// Full per-frame descriptor matrix (T x 158) for a sequence. Untracked or
// degenerate frames fall through the zero-params path: expr features are
// zero and the geometric blocks describe the mean shape.
inline Eigen::MatrixXd extract(const LandmarkSequence& seq, const ShapeModel& model,
                               const std::vector<int>& stable_set = default_stable_points()) {
  int T = seq.size();
  Eigen::MatrixXd out(T, kFeatureDim);
  Eigen::VectorXd prev_expr;
  for (int t = 0; t < T; ++t) {
    ShapeParams p = fit_params(model, seq.frames[t].points);
    Frontalized f = frontalize(model, p);
    Eigen::VectorXd expr = expr_features(f);
    Eigen::VectorXd delta = delta_features(expr, prev_expr, t == 0);
    prev_expr = expr;
    out.block(t, 0, 1, kExprDim) = expr.transpose();
    out.block(t, kExprDim, 1, kExprDim) = delta.transpose();
    out.block(t, 2 * kExprDim, 1, kGroupDim) = group_features(f.points).transpose();
    out.block(t, 2 * kExprDim + kGroupDim, 1, kMedianDim) =
        median_distance_features(f.points, stable_set).transpose();
  }
  return out;
}

struct FeatureSelection {
  std::vector<int> selected_indices;  // sorted, unique
  double merit = 0.0;
};

// Hall's CFS merit: k * mean|r_cf| / sqrt(k + k(k-1) * mean|r_ff|), greedy
// best-first forward search stopping after `patience` consecutive
// non-improving expansions. Ties break toward the lower feature index.
inline FeatureSelection cfs_select(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                                   int patience = 5) {
  int n = static_cast<int>(features.rows());
  int d = static_cast<int>(features.cols());
  if (n != static_cast<int>(labels.size()))
    throw FeraError("cfs_select: feature/label length mismatch");
  {
    bool varied = false;
    for (size_t i = 1; i < labels.size(); ++i) varied |= labels[i] != labels[0];
    if (!varied) throw FeraError("cfs_select: labels are constant");
  }
  if (!features.allFinite()) throw FeraError("cfs_select: non-finite features");

  // standardize columns; constant columns get zero correlation everywhere
  Eigen::MatrixXd Z(n, d);
  for (int j = 0; j < d; ++j) {
    double mu = features.col(j).mean();
    Eigen::VectorXd c = features.col(j).array() - mu;
    double sd = std::sqrt(c.squaredNorm() / n);
    Z.col(j) = sd > 1e-12 ? Eigen::VectorXd(c / sd) : Eigen::VectorXd::Zero(n);
  }
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = labels[i];
  double ymu = y.mean();
  y.array() -= ymu;
  double ysd = std::sqrt(y.squaredNorm() / n);
  y /= ysd;

  Eigen::VectorXd r_cf = (Z.transpose() * y / n).cwiseAbs();
  Eigen::MatrixXd r_ff = (Z.transpose() * Z / n).cwiseAbs();

  auto merit = [&](const std::vector<int>& s) {
    double k = static_cast<double>(s.size());
    double sum_cf = 0, sum_ff = 0;
    for (size_t a = 0; a < s.size(); ++a) {
      sum_cf += r_cf[s[a]];
      for (size_t b = a + 1; b < s.size(); ++b) sum_ff += r_ff(s[a], s[b]);
    }
    double mean_cf = sum_cf / k;
    double mean_ff = k > 1 ? sum_ff / (k * (k - 1) / 2) : 0.0;
    double denom = std::sqrt(k + k * (k - 1) * mean_ff);
    return denom > 0 ? k * mean_cf / denom : 0.0;
  };

  std::vector<int> current, best;
  double best_merit = 0.0;
  std::vector<bool> used(d, false);
  int stall = 0;
  while (static_cast<int>(current.size()) < d && stall < patience) {
    int pick = -1;
    double pick_merit = -1.0;
    for (int j = 0; j < d; ++j) {
      if (used[j]) continue;
      current.push_back(j);
      double m = merit(current);
      current.pop_back();
      if (m > pick_merit + 1e-15) {
        pick_merit = m;
        pick = j;
      }
    }
    if (pick < 0) break;
    current.push_back(pick);
    used[pick] = true;
    if (pick_merit > best_merit + 1e-12) {
      best_merit = pick_merit;
      best = current;
      stall = 0;
    } else {
      ++stall;
    }
  }
  FeatureSelection sel;
  sel.selected_indices = best;
  std::sort(sel.selected_indices.begin(), sel.selected_indices.end());
  sel.merit = best_merit;
  return sel;
}

// Per-feature standardization statistics fitted on training frames.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // floored at 1e-12; constant columns pass through

  static Standardizer fit(const Eigen::MatrixXd& X) {
    Standardizer s;
    int n = static_cast<int>(X.rows());
    s.mean = X.colwise().mean();
    s.stddev.resize(X.cols());
    for (int j = 0; j < X.cols(); ++j) {
      double v = (X.col(j).array() - s.mean[j]).square().sum() / n;
      s.stddev[j] = std::sqrt(v) > 1e-12 ? std::sqrt(v) : 1.0;
    }
    return s;
  }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
  }
};

// Column subset of a feature matrix.
inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<int>& idx) {
  Eigen::MatrixXd out(X.rows(), static_cast<int>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) out.col(static_cast<int>(j)) = X.col(idx[j]);
  return out;
}

// Feature matrix persistence: CSV (one row per frame, 158 columns).
inline void write_feature_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& X) {
  std::ofstream out(path);
  if (!out) throw FeraError("cannot write feature file: " + path.string());
  char buf[32];
  for (int r = 0; r < X.rows(); ++r) {
    for (int c = 0; c < X.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", X(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd load_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FeraError("cannot open feature file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = fera::detail::split_csv_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FeraError("empty feature file: " + path.string());
  Eigen::MatrixXd X(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size())
      throw FeraError("ragged feature file: " + path.string());
    for (size_t c = 0; c < rows[r].size(); ++c)
      X(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  }
  return X;
}

}  // namespace fera
