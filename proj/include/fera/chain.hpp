#pragma once

// Linear-chain models: a 2-state CRF for AU occurrence and a 6-state
// ordinal CORF (logistic cumulative link) for AU intensity. Exact
// inference by forward-backward / Viterbi in log space, maximum
// likelihood training by L-BFGS.

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "fera/core.hpp"
#include "fera/lbfgs.hpp"

namespace fera {

constexpr int kCrfStates = 2;
constexpr int kCorfStates = 6;

struct CrfParams {
  Eigen::MatrixXd node_w;  // 2 x (D+1), last column is the per-state bias
  Eigen::MatrixXd trans;   // 2 x 2

  int n_features() const { return static_cast<int>(node_w.cols()) - 1; }
  static CrfParams zero(int d) {
    return {Eigen::MatrixXd::Zero(kCrfStates, d + 1), Eigen::MatrixXd::Zero(kCrfStates, kCrfStates)};
  }
};

// Thresholds are stored as (b_1, log-increments delta_2..delta_5) so the
// reconstructed cut points are strictly increasing by construction.
struct CorfParams {
  Eigen::VectorXd proj;     // D
  double b1 = 0.0;
  Eigen::VectorXd log_inc;  // 4
  double log_scale = 0.0;
  Eigen::MatrixXd trans;    // 6 x 6

  int n_features() const { return static_cast<int>(proj.size()); }
  double scale() const { return std::exp(log_scale); }
  Eigen::VectorXd thresholds() const {  // b_1 < ... < b_5
    Eigen::VectorXd b(kCorfStates - 1);
    b[0] = b1;
    for (int i = 1; i < kCorfStates - 1; ++i) b[i] = b[i - 1] + std::exp(log_inc[i - 1]);
    return b;
  }
  static CorfParams init(int d, std::uint64_t seed) {
    CorfParams p;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 0.01);
    p.proj.resize(d);
    for (int i = 0; i < d; ++i) p.proj[i] = nd(rng);
    p.b1 = -2.0;
    p.log_inc = Eigen::VectorXd::Zero(4);  // unit increments: -2,-1,0,1,2
    p.trans = Eigen::MatrixXd::Zero(kCorfStates, kCorfStates);
    return p;
  }
};

struct WindowPrediction {
  std::vector<int> labels;
  double score = 0.0;  // length-normalized joint log-probability
};

struct LabeledWindow {
  Eigen::MatrixXd X;   // T x D
  std::vector<int> y;  // T, state indices
};

inline Eigen::VectorXd node_potential_crf(const CrfParams& p, const Eigen::VectorXd& x) {
  Eigen::VectorXd xb(x.size() + 1);
  xb << x, 1.0;
  return p.node_w * xb;
}

namespace detail {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Log ordinal class masses and their derivatives w.r.t. the projection z,
// the 5 cut points, and the steepness s.
struct CorfNode {
  Eigen::Matrix<double, kCorfStates, 1> pot;
  Eigen::Matrix<double, kCorfStates, 1> d_z;
  Eigen::Matrix<double, kCorfStates, kCorfStates - 1> d_b;
  Eigen::Matrix<double, kCorfStates, 1> d_s;
};

inline CorfNode corf_node(const Eigen::VectorXd& b, double s, double z) {
  CorfNode out;
  out.d_b.setZero();
  // cumulative sigmoids at the 5 cut points
  double cum[kCorfStates + 1], dcum_z[kCorfStates + 1], dcum_b[kCorfStates + 1],
      dcum_s[kCorfStates + 1];
  cum[0] = 0.0;
  dcum_z[0] = dcum_b[0] = dcum_s[0] = 0.0;
  cum[kCorfStates] = 1.0;
  dcum_z[kCorfStates] = dcum_b[kCorfStates] = dcum_s[kCorfStates] = 0.0;
  for (int k = 1; k < kCorfStates; ++k) {
    double a = sigmoid(s * (b[k - 1] - z));
    double ap = a * (1.0 - a);
    cum[k] = a;
    dcum_z[k] = -s * ap;
    dcum_b[k] = s * ap;
    dcum_s[k] = (b[k - 1] - z) * ap;
  }
  for (int c = 0; c < kCorfStates; ++c) {
    double mass = cum[c + 1] - cum[c];
    double m = std::max(mass, 1e-300);
    out.pot[c] = std::log(m);
    out.d_z[c] = (dcum_z[c + 1] - dcum_z[c]) / m;
    out.d_s[c] = (dcum_s[c + 1] - dcum_s[c]) / m;
    if (c + 1 <= kCorfStates - 1) out.d_b(c, c) = dcum_b[c + 1] / m;
    if (c >= 1) out.d_b(c, c - 1) = -dcum_b[c] / m;
  }
  return out;
}

inline double logsumexp(const Eigen::VectorXd& v) {
  double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace detail

inline Eigen::VectorXd node_potential_corf(const CorfParams& p, const Eigen::VectorXd& x) {
  double z = p.proj.dot(x);
  return detail::corf_node(p.thresholds(), p.scale(), z).pot;
}

struct FbResult {
  double log_partition = 0.0;
  double log_partition_backward = 0.0;
  Eigen::MatrixXd marginals;             // T x S
  std::vector<Eigen::MatrixXd> pairwise;  // T-1 entries, S x S
};

// Exact inference over log node potentials (T x S) and a transition matrix.
inline FbResult forward_backward(const Eigen::MatrixXd& node, const Eigen::MatrixXd& trans) {
  const int T = static_cast<int>(node.rows());
  const int S = static_cast<int>(node.cols());
  Eigen::MatrixXd alpha(T, S), beta(T, S);
  alpha.row(0) = node.row(0);
  for (int t = 1; t < T; ++t)
    for (int j = 0; j < S; ++j)
      alpha(t, j) =
          node(t, j) + detail::logsumexp(alpha.row(t - 1).transpose() + trans.col(j));
  beta.row(T - 1).setZero();
  for (int t = T - 2; t >= 0; --t)
    for (int i = 0; i < S; ++i)
      beta(t, i) = detail::logsumexp(trans.row(i).transpose() +
                                     node.row(t + 1).transpose() + beta.row(t + 1).transpose());
  FbResult r;
  r.log_partition = detail::logsumexp(alpha.row(T - 1).transpose());
  r.log_partition_backward = detail::logsumexp(node.row(0).transpose() + beta.row(0).transpose());
  r.marginals = ((alpha + beta).colwise() - Eigen::VectorXd::Constant(T, r.log_partition))
                    .array()
                    .exp();
  r.pairwise.resize(std::max(0, T - 1));
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd m(S, S);
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j)
        m(i, j) = std::exp(alpha(t, i) + trans(i, j) + node(t + 1, j) + beta(t + 1, j) -
                           r.log_partition);
    r.pairwise[t] = m;
  }
  return r;
}

// Viterbi decode over the same potentials; score is the length-normalized
// log-probability of the best path.
inline WindowPrediction viterbi_decode(const Eigen::MatrixXd& node, const Eigen::MatrixXd& trans) {
  const int T = static_cast<int>(node.rows());
  const int S = static_cast<int>(node.cols());
  Eigen::MatrixXd delta(T, S);
  Eigen::MatrixXi back(T, S);
  delta.row(0) = node.row(0);
  for (int t = 1; t < T; ++t) {
    for (int j = 0; j < S; ++j) {
      int arg = 0;
      double best = delta(t - 1, 0) + trans(0, j);
      for (int i = 1; i < S; ++i) {
        double v = delta(t - 1, i) + trans(i, j);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      delta(t, j) = node(t, j) + best;
      back(t, j) = arg;
    }
  }
  WindowPrediction pred;
  pred.labels.resize(T);
  int arg = 0;
  for (int j = 1; j < S; ++j)
    if (delta(T - 1, j) > delta(T - 1, arg)) arg = j;
  double best_path = delta(T - 1, arg);
  for (int t = T - 1; t >= 0; --t) {
    pred.labels[t] = arg;
    if (t > 0) arg = back(t, arg);
  }
  double log_z = forward_backward(node, trans).log_partition;
  pred.score = (best_path - log_z) / T;
  return pred;
}

// ---- parameter vector packing --------------------------------------------

namespace detail {

inline Eigen::VectorXd pack_crf(const CrfParams& p) {
  int d1 = static_cast<int>(p.node_w.cols());
  Eigen::VectorXd v(kCrfStates * d1 + kCrfStates * kCrfStates);
  int k = 0;
  for (int s = 0; s < kCrfStates; ++s)
    for (int j = 0; j < d1; ++j) v[k++] = p.node_w(s, j);
  for (int i = 0; i < kCrfStates; ++i)
    for (int j = 0; j < kCrfStates; ++j) v[k++] = p.trans(i, j);
  return v;
}

inline CrfParams unpack_crf(const Eigen::VectorXd& v, int d) {
  CrfParams p = CrfParams::zero(d);
  int k = 0;
  for (int s = 0; s < kCrfStates; ++s)
    for (int j = 0; j < d + 1; ++j) p.node_w(s, j) = v[k++];
  for (int i = 0; i < kCrfStates; ++i)
    for (int j = 0; j < kCrfStates; ++j) p.trans(i, j) = v[k++];
  return p;
}

inline Eigen::VectorXd pack_corf(const CorfParams& p) {
  int d = p.n_features();
  Eigen::VectorXd v(d + 1 + 4 + 1 + kCorfStates * kCorfStates);
  int k = 0;
  for (int i = 0; i < d; ++i) v[k++] = p.proj[i];
  v[k++] = p.b1;
  for (int i = 0; i < 4; ++i) v[k++] = p.log_inc[i];
  v[k++] = p.log_scale;
  for (int i = 0; i < kCorfStates; ++i)
    for (int j = 0; j < kCorfStates; ++j) v[k++] = p.trans(i, j);
  return v;
}

inline CorfParams unpack_corf(const Eigen::VectorXd& v, int d) {
  CorfParams p;
  p.proj.resize(d);
  p.log_inc.resize(4);
  p.trans.resize(kCorfStates, kCorfStates);
  int k = 0;
  for (int i = 0; i < d; ++i) p.proj[i] = v[k++];
  p.b1 = v[k++];
  for (int i = 0; i < 4; ++i) p.log_inc[i] = v[k++];
  p.log_scale = v[k++];
  for (int i = 0; i < kCorfStates; ++i)
    for (int j = 0; j < kCorfStates; ++j) p.trans(i, j) = v[k++];
  return p;
}

}  // namespace detail

// ---- negative log likelihood + gradient ----------------------------------

// Regularized NLL over windows; l2 applies to node weights (CRF) or to the
// projection (CORF), never to transitions, cut points, or steepness.
inline double crf_nll_grad(const CrfParams& p, const std::vector<LabeledWindow>& windows,
                           double l2, CrfParams& grad) {
  int d = p.n_features();
  grad = CrfParams::zero(d);
  double nll = 0.0;
  for (size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    const int T = static_cast<int>(win.X.rows());
    Eigen::MatrixXd node(T, kCrfStates);
    for (int t = 0; t < T; ++t) node.row(t) = node_potential_crf(p, win.X.row(t).transpose()).transpose();
    FbResult fb = forward_backward(node, p.trans);
    double path = 0.0;
    for (int t = 0; t < T; ++t) {
      if (win.y[t] < 0 || win.y[t] >= kCrfStates)
        throw FeraError("crf_nll_grad: label out of range in window " + std::to_string(w));
      path += node(t, win.y[t]);
      if (t > 0) path += p.trans(win.y[t - 1], win.y[t]);
    }
    nll += fb.log_partition - path;
    if (!std::isfinite(nll))
      throw FeraError("crf_nll_grad: non-finite objective at window " + std::to_string(w));
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd xb(d + 1);
      xb << win.X.row(t).transpose(), 1.0;
      for (int s = 0; s < kCrfStates; ++s) {
        double coef = fb.marginals(t, s) - (win.y[t] == s ? 1.0 : 0.0);
        grad.node_w.row(s) += coef * xb.transpose();
      }
      if (t > 0) {
        grad.trans += fb.pairwise[t - 1];
        grad.trans(win.y[t - 1], win.y[t]) -= 1.0;
      }
    }
  }
  nll += 0.5 * l2 * p.node_w.squaredNorm();
  grad.node_w += l2 * p.node_w;
  return nll;
}

inline double corf_nll_grad(const CorfParams& p, const std::vector<LabeledWindow>& windows,
                            double l2, CorfParams& grad) {
  int d = p.n_features();
  grad.proj = Eigen::VectorXd::Zero(d);
  grad.b1 = 0.0;
  grad.log_inc = Eigen::VectorXd::Zero(4);
  grad.log_scale = 0.0;
  grad.trans = Eigen::MatrixXd::Zero(kCorfStates, kCorfStates);
  const Eigen::VectorXd b = p.thresholds();
  const double s = p.scale();
  double nll = 0.0;
  for (size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    const int T = static_cast<int>(win.X.rows());
    Eigen::MatrixXd node(T, kCorfStates);
    std::vector<detail::CorfNode> nodes(T);
    for (int t = 0; t < T; ++t) {
      double z = p.proj.dot(win.X.row(t));
      nodes[t] = detail::corf_node(b, s, z);
      node.row(t) = nodes[t].pot.transpose();
    }
    FbResult fb = forward_backward(node, p.trans);
    double path = 0.0;
    for (int t = 0; t < T; ++t) {
      if (win.y[t] < 0 || win.y[t] >= kCorfStates)
        throw FeraError("corf_nll_grad: label out of range in window " + std::to_string(w));
      path += node(t, win.y[t]);
      if (t > 0) path += p.trans(win.y[t - 1], win.y[t]);
    }
    nll += fb.log_partition - path;
    if (!std::isfinite(nll))
      throw FeraError("corf_nll_grad: non-finite objective at window " + std::to_string(w));
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd db_acc = Eigen::VectorXd::Zero(kCorfStates - 1);  // d/d b_k
      double dz_acc = 0.0, ds_acc = 0.0;
      for (int c = 0; c < kCorfStates; ++c) {
        double coef = fb.marginals(t, c) - (win.y[t] == c ? 1.0 : 0.0);
        dz_acc += coef * nodes[t].d_z[c];
        ds_acc += coef * nodes[t].d_s[c];
        db_acc += coef * nodes[t].d_b.row(c).transpose();
      }
      grad.proj += dz_acc * win.X.row(t).transpose();
      grad.log_scale += ds_acc * s;  // chain through s = exp(log_scale)
      // chain through b_k = b1 + sum_{j<=k} exp(log_inc_j)
      grad.b1 += db_acc.sum();
      for (int j = 0; j < 4; ++j) {
        double e = std::exp(p.log_inc[j]);
        for (int k = j + 1; k < kCorfStates - 1; ++k) grad.log_inc[j] += db_acc[k] * e;
      }
      if (t > 0) {
        grad.trans += fb.pairwise[t - 1];
        grad.trans(win.y[t - 1], win.y[t]) -= 1.0;
      }
    }
  }
  nll += 0.5 * l2 * p.proj.squaredNorm();
  grad.proj += l2 * p.proj;
  return nll;
}

// ---- training --------------------------------------------------------------

struct ChainTrainConfig {
  double l2 = 1.0;
  int max_iter = 200;
  double tol = 1e-5;
  std::uint64_t seed = 0;
};

inline CrfParams train_crf(const std::vector<LabeledWindow>& windows,
                           const ChainTrainConfig& cfg) {
  if (windows.empty()) throw FeraError("train_crf: no training windows");
  int d = static_cast<int>(windows[0].X.cols());
  auto obj = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    CrfParams p = detail::unpack_crf(v, d);
    CrfParams gp;
    double f = crf_nll_grad(p, windows, cfg.l2, gp);
    g = detail::pack_crf(gp);
    return f;
  };
  LbfgsOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.grad_tol = cfg.tol;
  auto res = lbfgs_minimize(obj, detail::pack_crf(CrfParams::zero(d)), opts);
  return detail::unpack_crf(res.x, d);
}

inline CorfParams train_corf(const std::vector<LabeledWindow>& windows,
                             const ChainTrainConfig& cfg) {
  if (windows.empty()) throw FeraError("train_corf: no training windows");
  int d = static_cast<int>(windows[0].X.cols());
  auto obj = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    CorfParams p = detail::unpack_corf(v, d);
    CorfParams gp;
    double f = corf_nll_grad(p, windows, cfg.l2, gp);
    g = detail::pack_corf(gp);
    return f;
  };
  LbfgsOptions opts;
  opts.max_iter = cfg.max_iter;
  opts.grad_tol = cfg.tol;
  auto res = lbfgs_minimize(obj, detail::pack_corf(CorfParams::init(d, cfg.seed)), opts);
  return detail::unpack_corf(res.x, d);
}

inline WindowPrediction decode_crf(const CrfParams& p, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd node(X.rows(), kCrfStates);
  for (int t = 0; t < X.rows(); ++t) node.row(t) = node_potential_crf(p, X.row(t).transpose()).transpose();
  return viterbi_decode(node, p.trans);
}

inline WindowPrediction decode_corf(const CorfParams& p, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd node(X.rows(), kCorfStates);
  const Eigen::VectorXd b = p.thresholds();
  const double s = p.scale();
  for (int t = 0; t < X.rows(); ++t)
    node.row(t) = detail::corf_node(b, s, p.proj.dot(X.row(t))).pot.transpose();
  return viterbi_decode(node, p.trans);
}

// ---- serialization ---------------------------------------------------------

inline json crf_to_json(const CrfParams& p) {
  json j;
  j["node_w"] = std::vector<double>(p.node_w.data(), p.node_w.data() + p.node_w.size());
  j["n_features"] = p.n_features();
  j["trans"] = std::vector<double>(p.trans.data(), p.trans.data() + p.trans.size());
  return j;
}

inline CrfParams crf_from_json(const json& j) {
  int d = j.at("n_features").get<int>();
  CrfParams p = CrfParams::zero(d);
  auto w = j.at("node_w").get<std::vector<double>>();
  std::copy(w.begin(), w.end(), p.node_w.data());
  auto t = j.at("trans").get<std::vector<double>>();
  std::copy(t.begin(), t.end(), p.trans.data());
  return p;
}

inline json corf_to_json(const CorfParams& p) {
  json j;
  j["proj"] = std::vector<double>(p.proj.data(), p.proj.data() + p.proj.size());
  j["b1"] = p.b1;
  j["log_inc"] = std::vector<double>(p.log_inc.data(), p.log_inc.data() + p.log_inc.size());
  j["log_scale"] = p.log_scale;
  j["link"] = "logistic";
  j["trans"] = std::vector<double>(p.trans.data(), p.trans.data() + p.trans.size());
  return j;
}

inline CorfParams corf_from_json(const json& j) {
  CorfParams p;
  auto w = j.at("proj").get<std::vector<double>>();
  p.proj = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<int>(w.size()));
  p.b1 = j.at("b1").get<double>();
  auto li = j.at("log_inc").get<std::vector<double>>();
  p.log_inc = Eigen::Map<Eigen::VectorXd>(li.data(), static_cast<int>(li.size()));
  p.log_scale = j.at("log_scale").get<double>();
  auto t = j.at("trans").get<std::vector<double>>();
  p.trans.resize(kCorfStates, kCorfStates);
  std::copy(t.begin(), t.end(), p.trans.data());
  return p;
}

}  // namespace fera
