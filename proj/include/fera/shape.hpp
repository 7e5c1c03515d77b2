#pragma once

// Point-distribution shape model over the 66-point markup: closed-form
// similarity (Procrustes) registration, orthogonal projection onto a PCA
// basis, frontalization, and model training with mirror augmentation.

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "fera/core.hpp"

namespace fera {


inline Eigen::VectorXd shape_to_vec(const Shape& s) {
  Eigen::VectorXd v(2 * kNumLandmarks);
  for (int i = 0; i < kNumLandmarks; ++i) {
    v[2 * i] = s[i][0];
    v[2 * i + 1] = s[i][1];
  }
  return v;
}

inline Shape vec_to_shape(const Eigen::VectorXd& v) {
  Shape s;
  for (int i = 0; i < kNumLandmarks; ++i) s[i] = {v[2 * i], v[2 * i + 1]};
  return s;
}

// Index remap for a horizontal flip of the 66-point markup:
// 17 jaw, 10 brow, 9 nose, 12 eye, 18 mouth points.
inline const std::array<int, kNumLandmarks>& mirror_map_66() {
  static const std::array<int, kNumLandmarks> m = [] {
    std::array<int, kNumLandmarks> r{};
    for (int i = 0; i < kNumLandmarks; ++i) r[i] = i;
    auto swap_range = [&r](int a, int b, int n) {
      for (int i = 0; i < n; ++i) {
        r[a + i] = b + n - 1 - i;
        r[b + n - 1 - i] = a + i;
      }
    };
    for (int i = 0; i < 17; ++i) r[i] = 16 - i;       // jaw
    swap_range(17, 22, 5);                            // brows
    // nose bridge 27..30 fixed; nostril row 31..35
    r[31] = 35; r[32] = 34; r[33] = 33; r[34] = 32; r[35] = 31;
    // eyes: left 36..41, right 42..47
    r[36] = 45; r[37] = 44; r[38] = 43; r[39] = 42; r[40] = 47; r[41] = 46;
    r[42] = 39; r[43] = 38; r[44] = 37; r[45] = 36; r[46] = 41; r[47] = 40;
    // outer mouth 48..59
    r[48] = 54; r[49] = 53; r[50] = 52; r[51] = 51; r[52] = 50; r[53] = 49; r[54] = 48;
    r[55] = 59; r[56] = 58; r[57] = 57; r[58] = 56; r[59] = 55;
    // inner mouth 60..65
    r[60] = 62; r[61] = 61; r[62] = 60; r[63] = 65; r[64] = 64; r[65] = 63;
    return r;
  }();
  return m;
}

inline Shape mirror_shape(const Shape& s, const std::array<int, kNumLandmarks>& map = mirror_map_66()) {
  Shape out;
  for (int i = 0; i < kNumLandmarks; ++i) out[i] = {-s[map[i]][0], s[map[i]][1]};
  return out;
}

struct ShapeModel {
  Eigen::VectorXd mean_shape;   // 132
  Eigen::MatrixXd basis;        // 132 x n_components, orthonormal columns
  Eigen::VectorXd eigenvalues;  // n_components, non-increasing
  int pose_component_index = 0;
  std::array<int, kNumLandmarks> mirror_map = mirror_map_66();

  int n_components() const { return static_cast<int>(basis.cols()); }
};

struct ShapeParams {
  double scale = 1.0;
  double rotation = 0.0;  // radians, in-plane
  double tx = 0.0, ty = 0.0;
  Eigen::VectorXd nonrigid;
  bool degenerate = false;
};

struct Frontalized {
  Eigen::VectorXd expr;  // nonrigid with the pose component removed
  Shape points;          // reconstruction with identity rigid, zero pose
};

namespace detail {

inline Eigen::Vector2d centroid(const Eigen::VectorXd& v) {
  double cx = 0, cy = 0;
  int n = static_cast<int>(v.size()) / 2;
  for (int i = 0; i < n; ++i) {
    cx += v[2 * i];
    cy += v[2 * i + 1];
  }
  return {cx / n, cy / n};
}

// Least-squares similarity transform (s, theta, t) mapping ref onto tgt.
// Returns false for a degenerate (coincident or collinear) target.
inline bool similarity_fit(const Eigen::VectorXd& ref, const Eigen::VectorXd& tgt, double& s,
                           double& theta, double& tx, double& ty) {
  int n = static_cast<int>(ref.size()) / 2;
  Eigen::Vector2d rc = centroid(ref), tc = centroid(tgt);
  double a = 0, b = 0, rnorm = 0, tnorm = 0;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    double rx = ref[2 * i] - rc[0], ry = ref[2 * i + 1] - rc[1];
    double gx = tgt[2 * i] - tc[0], gy = tgt[2 * i + 1] - tc[1];
    a += rx * gx + ry * gy;
    b += rx * gy - ry * gx;
    rnorm += rx * rx + ry * ry;
    tnorm += gx * gx + gy * gy;
    sxx += gx * gx;
    sxy += gx * gy;
    syy += gy * gy;
  }
  // degenerate target: all points coincident or collinear
  double tr = sxx + syy;
  double det = sxx * syy - sxy * sxy;
  if (tnorm < 1e-12 || (tr > 0 && det / (tr * tr) < 1e-12)) return false;
  s = std::sqrt(a * a + b * b) / rnorm;
  theta = std::atan2(b, a);
  double c = std::cos(theta), sn = std::sin(theta);
  tx = tc[0] - s * (c * rc[0] - sn * rc[1]);
  ty = tc[1] - s * (sn * rc[0] + c * rc[1]);
  return true;
}

inline Eigen::VectorXd apply_similarity(const Eigen::VectorXd& v, double s, double theta, double tx,
                                        double ty) {
  int n = static_cast<int>(v.size()) / 2;
  Eigen::VectorXd out(v.size());
  double c = std::cos(theta), sn = std::sin(theta);
  for (int i = 0; i < n; ++i) {
    double x = v[2 * i], y = v[2 * i + 1];
    out[2 * i] = s * (c * x - sn * y) + tx;
    out[2 * i + 1] = s * (sn * x + c * y) + ty;
  }
  return out;
}

inline Eigen::VectorXd inverse_similarity(const Eigen::VectorXd& v, double s, double theta,
                                          double tx, double ty) {
  int n = static_cast<int>(v.size()) / 2;
  Eigen::VectorXd out(v.size());
  double c = std::cos(theta), sn = std::sin(theta);
  for (int i = 0; i < n; ++i) {
    double x = v[2 * i] - tx, y = v[2 * i + 1] - ty;
    out[2 * i] = (c * x + sn * y) / s;
    out[2 * i + 1] = (-sn * x + c * y) / s;
  }
  return out;
}

}  // namespace detail

// Rigid similarity aligning the mean shape to the points, then orthogonal
// projection of the rigid-normalized residual onto the non-rigid basis.
// A degenerate point set yields all-zero params with the degenerate flag.
inline ShapeParams fit_params(const ShapeModel& model, const Shape& points) {
  ShapeParams p;
  p.nonrigid = Eigen::VectorXd::Zero(model.n_components());
  Eigen::VectorXd x = shape_to_vec(points);
  if (!x.allFinite()) throw FeraError("fit_params: non-finite input points");
  double s, th, tx, ty;
  if (!detail::similarity_fit(model.mean_shape, x, s, th, tx, ty)) {
    p.scale = 0.0;
    p.degenerate = true;
    return p;
  }
  p.scale = s;
  p.rotation = th;
  p.tx = tx;
  p.ty = ty;
  Eigen::VectorXd normalized = detail::inverse_similarity(x, s, th, tx, ty);
  p.nonrigid = model.basis.transpose() * (normalized - model.mean_shape);
  return p;
}

inline Shape reconstruct(const ShapeModel& model, const ShapeParams& p) {
  Eigen::VectorXd v = model.mean_shape + model.basis * p.nonrigid;
  if (!p.degenerate) v = detail::apply_similarity(v, p.scale, p.rotation, p.tx, p.ty);
  return vec_to_shape(v);
}

// Drops the pose component from the non-rigid parameters and reconstructs
// with identity rigid transform and the pose component zeroed.
inline Frontalized frontalize(const ShapeModel& model, const ShapeParams& p) {
  Frontalized out;
  int k = model.n_components();
  out.expr.resize(k - 1);
  Eigen::VectorXd coeffs = p.nonrigid;
  int j = 0;
  for (int i = 0; i < k; ++i) {
    if (i == model.pose_component_index) continue;
    out.expr[j++] = coeffs[i];
  }
  coeffs[model.pose_component_index] = 0.0;
  out.points = vec_to_shape(model.mean_shape + model.basis * coeffs);
  return out;
}

// Generalized Procrustes alignment + mirror augmentation + PCA.
// Throws on rank deficiency, reporting the attained rank.
inline ShapeModel train_shape_model(const std::vector<Shape>& corpus, int n_components = 20) {
  if (static_cast<int>(corpus.size()) < n_components + 1)
    throw FeraError("train_shape_model: corpus of " + std::to_string(corpus.size()) +
                    " shapes is too small for " + std::to_string(n_components) + " components");
  const auto& mmap = mirror_map_66();
  std::vector<Eigen::VectorXd> data;
  data.reserve(2 * corpus.size());
  for (const auto& s : corpus) {
    Eigen::VectorXd v = shape_to_vec(s);
    if (v.allFinite() && v.squaredNorm() > 1e-12) {
      data.push_back(v);
      data.push_back(shape_to_vec(mirror_shape(s, mmap)));
    }
  }
  if (data.empty()) throw FeraError("train_shape_model: no usable shapes");

  // GPA: iterate aligning every shape to the running mean, renormalizing the
  // mean to centroid 0 / unit Frobenius norm each round.
  Eigen::VectorXd ref = data[0];
  auto renorm = [](Eigen::VectorXd& v) {
    Eigen::Vector2d c = detail::centroid(v);
    for (int i = 0; i < kNumLandmarks; ++i) {
      v[2 * i] -= c[0];
      v[2 * i + 1] -= c[1];
    }
    v /= v.norm();
  };
  renorm(ref);
  std::vector<Eigen::VectorXd> aligned(data.size());
  for (int iter = 0; iter < 10; ++iter) {
    for (size_t i = 0; i < data.size(); ++i) {
      double s, th, tx, ty;
      if (!detail::similarity_fit(ref, data[i], s, th, tx, ty)) {
        aligned[i] = ref;  // degenerate shape contributes nothing
        continue;
      }
      aligned[i] = detail::inverse_similarity(data[i], s, th, tx, ty);
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2 * kNumLandmarks);
    for (const auto& a : aligned) mean += a;
    mean /= static_cast<double>(aligned.size());
    // exactly symmetric reference: alignment then commutes with mirroring
    mean = 0.5 * (mean + shape_to_vec(mirror_shape(vec_to_shape(mean), mmap)));
    renorm(mean);
    if ((mean - ref).norm() < 1e-12) {
      ref = mean;
      break;
    }
    ref = mean;
  }

  Eigen::MatrixXd X(static_cast<int>(aligned.size()), 2 * kNumLandmarks);
  for (size_t i = 0; i < aligned.size(); ++i) X.row(static_cast<int>(i)) = (aligned[i] - ref).transpose();
  Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(aligned.size() - 1);
  // average with the mirrored covariance so it commutes with the mirror
  // operator exactly and every eigenvector splits into a pure symmetric or
  // antisymmetric displacement field
  {
    auto q = [&](int a) { return a % 2 ? 2 * mmap[a / 2] + 1 : 2 * mmap[a / 2]; };
    auto sg = [](int a) { return a % 2 ? 1.0 : -1.0; };
    Eigen::MatrixXd mcov(cov.rows(), cov.cols());
    for (int a = 0; a < cov.rows(); ++a)
      for (int b = 0; b < cov.cols(); ++b) mcov(q(a), q(b)) = sg(a) * sg(b) * cov(a, b);
    cov = 0.5 * (cov + mcov);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw FeraError("train_shape_model: eigendecomposition failed");

  const Eigen::VectorXd& evals = es.eigenvalues();  // ascending
  double lmax = evals[evals.size() - 1];
  int rank = 0;
  for (int i = 0; i < evals.size(); ++i)
    if (evals[i] > std::max(1e-12, 1e-10 * lmax)) ++rank;
  if (rank < n_components)
    throw FeraError("train_shape_model: rank deficiency, attained rank " + std::to_string(rank) +
                    " < " + std::to_string(n_components));

  ShapeModel model;
  model.mean_shape = ref;
  model.basis.resize(2 * kNumLandmarks, n_components);
  model.eigenvalues.resize(n_components);
  int last = static_cast<int>(evals.size()) - 1;
  for (int c = 0; c < n_components; ++c) {
    model.eigenvalues[c] = evals[last - c];
    model.basis.col(c) = es.eigenvectors().col(last - c);
  }
  model.pose_component_index = 0;
  model.mirror_map = mmap;
  return model;
}

inline void save_shape_model(const std::filesystem::path& path, const ShapeModel& m) {
  json j;
  j["mean_shape"] = std::vector<double>(m.mean_shape.data(), m.mean_shape.data() + m.mean_shape.size());
  j["eigenvalues"] =
      std::vector<double>(m.eigenvalues.data(), m.eigenvalues.data() + m.eigenvalues.size());
  std::vector<double> basis;  // row-major
  for (int r = 0; r < m.basis.rows(); ++r)
    for (int c = 0; c < m.basis.cols(); ++c) basis.push_back(m.basis(r, c));
  j["basis"] = basis;
  j["n_components"] = m.n_components();
  j["pose_component_index"] = m.pose_component_index;
  j["mirror_map"] = std::vector<int>(m.mirror_map.begin(), m.mirror_map.end());
  std::ofstream out(path);
  if (!out) throw FeraError("cannot write shape model: " + path.string());
  out << j.dump() << '\n';
}

inline ShapeModel load_shape_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FeraError("cannot open shape model: " + path.string());
  json j;
  in >> j;
  ShapeModel m;
  auto mean = j.at("mean_shape").get<std::vector<double>>();
  m.mean_shape = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<int>(mean.size()));
  auto ev = j.at("eigenvalues").get<std::vector<double>>();
  m.eigenvalues = Eigen::Map<Eigen::VectorXd>(ev.data(), static_cast<int>(ev.size()));
  int k = j.at("n_components").get<int>();
  auto b = j.at("basis").get<std::vector<double>>();
  m.basis.resize(2 * kNumLandmarks, k);
  for (int r = 0; r < 2 * kNumLandmarks; ++r)
    for (int c = 0; c < k; ++c) m.basis(r, c) = b[static_cast<size_t>(r) * k + c];
  m.pose_component_index = j.at("pose_component_index").get<int>();
  auto mm = j.at("mirror_map").get<std::vector<int>>();
  std::copy(mm.begin(), mm.end(), m.mirror_map.begin());
  return m;
}

}  // namespace fera
