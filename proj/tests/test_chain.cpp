#include <catch2/catch_amalgamated.hpp>

#include "fera/chain.hpp"

using namespace fera;

namespace {

// Exhaustive path enumeration: log-partition, marginals, and best path.
struct Enumerated {
  double log_z;
  Eigen::MatrixXd marginals;
  std::vector<int> best_path;
  double best_logp;
};

Enumerated enumerate_chain(const Eigen::MatrixXd& node, const Eigen::MatrixXd& trans) {
  const int T = static_cast<int>(node.rows());
  const int S = static_cast<int>(node.cols());
  std::vector<int> path(T, 0);
  std::vector<double> logps;
  std::vector<std::vector<int>> paths;
  while (true) {
    double lp = 0;
    for (int t = 0; t < T; ++t) {
      lp += node(t, path[t]);
      if (t) lp += trans(path[t - 1], path[t]);
    }
    logps.push_back(lp);
    paths.push_back(path);
    int t = T - 1;
    while (t >= 0 && ++path[t] == S) path[t--] = 0;
    if (t < 0) break;
  }
  double mx = *std::max_element(logps.begin(), logps.end());
  double z = 0;
  for (double lp : logps) z += std::exp(lp - mx);
  Enumerated out;
  out.log_z = mx + std::log(z);
  out.marginals = Eigen::MatrixXd::Zero(T, S);
  for (size_t i = 0; i < paths.size(); ++i) {
    double w = std::exp(logps[i] - out.log_z);
    for (int t = 0; t < T; ++t) out.marginals(t, paths[i][t]) += w;
  }
  size_t bi = std::max_element(logps.begin(), logps.end()) - logps.begin();
  out.best_path = paths[bi];
  out.best_logp = logps[bi];
  return out;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

std::vector<LabeledWindow> separable_windows(int n_windows, int t_len, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.2);
  std::vector<LabeledWindow> out;
  for (int w = 0; w < n_windows; ++w) {
    LabeledWindow win;
    win.X.resize(t_len, 2);
    win.y.resize(t_len);
    for (int t = 0; t < t_len; ++t) {
      int y = (t + w) / 5 % 2;
      win.y[t] = y;
      win.X(t, 0) = (y ? 2.0 : -2.0) + noise(rng);
      win.X(t, 1) = noise(rng);
    }
    out.push_back(win);
  }
  return out;
}

}  // namespace

TEST_CASE("crf node potentials with zero weights are equal across states") {
  CrfParams p = CrfParams::zero(3);
  Eigen::VectorXd pot = node_potential_crf(p, Eigen::Vector3d(1.0, -2.0, 0.5));
  REQUIRE(pot[0] == pot[1]);
}

TEST_CASE("corf node potential peaks at the ordinal class containing z") {
  CorfParams p = CorfParams::init(1, 1);
  p.proj[0] = 1.0;
  // thresholds are -2,-1,0,1,2; z midway between b_2=-1 and b_3=0
  Eigen::VectorXd x(1);
  x[0] = -0.5;
  Eigen::VectorXd pot = node_potential_corf(p, x);
  int argmax = 0;
  pot.maxCoeff(&argmax);
  REQUIRE(argmax == 2);
}

TEST_CASE("corf node argmax is monotone non-decreasing in z") {
  CorfParams p = CorfParams::init(1, 1);
  p.proj[0] = 1.0;
  int prev = 0;
  for (double z = -5.0; z <= 5.0; z += 0.05) {
    Eigen::VectorXd x(1);
    x[0] = z;
    Eigen::VectorXd pot = node_potential_corf(p, x);
    int argmax = 0;
    pot.maxCoeff(&argmax);
    REQUIRE(argmax >= prev);
    prev = argmax;
  }
  REQUIRE(prev == kCorfStates - 1);
}

TEST_CASE("corf thresholds are strictly increasing under any parameters") {
  CorfParams p = CorfParams::init(2, 3);
  p.b1 = 4.0;
  p.log_inc << -3.0, 2.0, -5.0, 0.5;
  Eigen::VectorXd b = p.thresholds();
  for (int i = 1; i < b.size(); ++i) REQUIRE(b[i] > b[i - 1]);
}

TEST_CASE("length-1 window marginals are the softmax of node potentials") {
  Eigen::MatrixXd node(1, 3);
  node << 0.3, -1.2, 0.8;
  Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(3, 3);
  auto fb = forward_backward(node, trans);
  double z = std::exp(0.3) + std::exp(-1.2) + std::exp(0.8);
  REQUIRE(fb.marginals(0, 0) == Catch::Approx(std::exp(0.3) / z).margin(1e-12));
  REQUIRE(fb.marginals(0, 2) == Catch::Approx(std::exp(0.8) / z).margin(1e-12));
  REQUIRE(fb.log_partition == Catch::Approx(std::log(z)).margin(1e-12));
}

TEST_CASE("zero transitions factorize the marginals per frame") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd node(4, 2);
  for (int t = 0; t < 4; ++t)
    for (int s = 0; s < 2; ++s) node(t, s) = nd(rng);
  auto fb = forward_backward(node, Eigen::MatrixXd::Zero(2, 2));
  for (int t = 0; t < 4; ++t) {
    double z = std::exp(node(t, 0)) + std::exp(node(t, 1));
    REQUIRE(fb.marginals(t, 0) == Catch::Approx(std::exp(node(t, 0)) / z).margin(1e-10));
  }
}

TEST_CASE("forward-backward matches exhaustive enumeration on small chains") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 1.5);
  for (int trial = 0; trial < 60; ++trial) {
    int T = 1 + static_cast<int>(rng() % 6);
    int S = 2 + static_cast<int>(rng() % 2);  // 2..3 states here; 6 states in acceptance
    Eigen::MatrixXd node(T, S), trans(S, S);
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < S; ++s) node(t, s) = nd(rng);
    for (int a = 0; a < S; ++a)
      for (int b = 0; b < S; ++b) trans(a, b) = nd(rng);
    auto fb = forward_backward(node, trans);
    auto en = enumerate_chain(node, trans);
    REQUIRE(fb.log_partition == Catch::Approx(en.log_z).margin(1e-10));
    REQUIRE(fb.log_partition_backward == Catch::Approx(en.log_z).margin(1e-9));
    REQUIRE((fb.marginals - en.marginals).lpNorm<Eigen::Infinity>() < 1e-10);
    auto vit = viterbi_decode(node, trans);
    REQUIRE(vit.labels == en.best_path);
    REQUIRE(vit.score == Catch::Approx((en.best_logp - en.log_z) / T).margin(1e-10));
  }
}

TEST_CASE("viterbi with zero transitions is the per-frame argmax") {
  Eigen::MatrixXd node(3, 2);
  node << 1.0, -1.0, -2.0, 0.5, 0.1, 0.0;
  auto vit = viterbi_decode(node, Eigen::MatrixXd::Zero(2, 2));
  REQUIRE(vit.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("crf gradient matches central finite differences") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    int d = 2 + static_cast<int>(rng() % 2);
    std::vector<LabeledWindow> wins;
    for (int w = 0; w < 2; ++w) {
      LabeledWindow win;
      int T = 3 + static_cast<int>(rng() % 3);
      win.X.resize(T, d);
      win.y.resize(T);
      for (int t = 0; t < T; ++t) {
        for (int j = 0; j < d; ++j) win.X(t, j) = nd(rng);
        win.y[t] = static_cast<int>(rng() % 2);
      }
      wins.push_back(win);
    }
    Eigen::VectorXd v(kCrfStates * (d + 1) + kCrfStates * kCrfStates);
    for (int i = 0; i < v.size(); ++i) v[i] = nd(rng) * 0.5;
    auto f = [&](const Eigen::VectorXd& vv) {
      CrfParams p = detail::unpack_crf(vv, d);
      CrfParams g;
      return crf_nll_grad(p, wins, 0.7, g);
    };
    CrfParams p = detail::unpack_crf(v, d);
    CrfParams g;
    crf_nll_grad(p, wins, 0.7, g);
    Eigen::VectorXd ga = detail::pack_crf(g);
    Eigen::VectorXd gn = numeric_gradient(f, v);
    double scale = std::max(1.0, gn.lpNorm<Eigen::Infinity>());
    REQUIRE((ga - gn).lpNorm<Eigen::Infinity>() / scale < 1e-4);
  }
}

TEST_CASE("corf gradient matches central finite differences incl. reparametrization") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    int d = 2 + static_cast<int>(rng() % 2);
    std::vector<LabeledWindow> wins;
    for (int w = 0; w < 2; ++w) {
      LabeledWindow win;
      int T = 3 + static_cast<int>(rng() % 3);
      win.X.resize(T, d);
      win.y.resize(T);
      for (int t = 0; t < T; ++t) {
        for (int j = 0; j < d; ++j) win.X(t, j) = nd(rng);
        win.y[t] = static_cast<int>(rng() % kCorfStates);
      }
      wins.push_back(win);
    }
    int dim = d + 1 + 4 + 1 + kCorfStates * kCorfStates;
    Eigen::VectorXd v(dim);
    for (int i = 0; i < v.size(); ++i) v[i] = nd(rng) * 0.4;
    auto f = [&](const Eigen::VectorXd& vv) {
      CorfParams p = detail::unpack_corf(vv, d);
      CorfParams g;
      return corf_nll_grad(p, wins, 0.7, g);
    };
    CorfParams p = detail::unpack_corf(v, d);
    CorfParams g;
    corf_nll_grad(p, wins, 0.7, g);
    Eigen::VectorXd ga = detail::pack_corf(g);
    Eigen::VectorXd gn = numeric_gradient(f, v);
    double scale = std::max(1.0, gn.lpNorm<Eigen::Infinity>());
    REQUIRE((ga - gn).lpNorm<Eigen::Infinity>() / scale < 1e-4);
  }
}

TEST_CASE("labels outside the state range are rejected naming the window") {
  std::vector<LabeledWindow> wins(1);
  wins[0].X = Eigen::MatrixXd::Zero(2, 2);
  wins[0].y = {0, 7};
  CrfParams p = CrfParams::zero(2);
  CrfParams g;
  REQUIRE_THROWS_AS(crf_nll_grad(p, wins, 1.0, g), FeraError);
}

TEST_CASE("strong l2 drives crf node weights toward zero") {
  auto wins = separable_windows(4, 20, 17);
  ChainTrainConfig cfg;
  cfg.l2 = 1e6;
  CrfParams p = train_crf(wins, cfg);
  REQUIRE(p.node_w.lpNorm<Eigen::Infinity>() < 1e-3);
  // node potentials are then equal across states, so per-frame evidence is
  // uninformative (transitions are deliberately left unregularized)
  Eigen::VectorXd pot = node_potential_crf(p, wins[0].X.row(0).transpose());
  REQUIRE(std::abs(pot[0] - pot[1]) < 1e-2);
}

TEST_CASE("crf training separates a separable dataset with F1 = 1") {
  auto wins = separable_windows(6, 30, 19);
  ChainTrainConfig cfg;
  cfg.l2 = 0.01;
  CrfParams p = train_crf(wins, cfg);
  long tp = 0, fp = 0, fn = 0;
  for (const auto& w : wins) {
    auto pred = decode_crf(p, w.X);
    for (size_t t = 0; t < w.y.size(); ++t) {
      if (pred.labels[t] == 1 && w.y[t] == 1) tp++;
      if (pred.labels[t] == 1 && w.y[t] == 0) fp++;
      if (pred.labels[t] == 0 && w.y[t] == 1) fn++;
    }
  }
  REQUIRE(fp == 0);
  REQUIRE(fn == 0);
  REQUIRE(tp > 0);
}

TEST_CASE("corf recovers ordinal structure from thresholded linear data") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> nd(0.0, 0.3);
  Eigen::Vector2d w_star(1.5, -0.8);
  std::vector<LabeledWindow> wins;
  for (int w = 0; w < 8; ++w) {
    LabeledWindow win;
    int T = 40;
    win.X.resize(T, 2);
    win.y.resize(T);
    for (int t = 0; t < T; ++t) {
      win.X(t, 0) = std::sin(0.15 * t + w) * 3.0;
      win.X(t, 1) = std::cos(0.1 * t) * 2.0;
      double z = w_star.dot(win.X.row(t).transpose()) + nd(rng);
      win.y[t] = std::clamp(static_cast<int>(std::floor(z / 1.5)) + 3, 0, kCorfStates - 1);
    }
    wins.push_back(win);
  }
  ChainTrainConfig cfg;
  cfg.l2 = 0.01;
  cfg.seed = 1;
  CorfParams p = train_corf(wins, cfg);
  // direction of the projection agrees with w_star
  double cosang = p.proj.dot(w_star) / (p.proj.norm() * w_star.norm());
  REQUIRE(cosang > 0.8);
  // Kendall tau between predicted projection and labels
  long concordant = 0, discordant = 0;
  std::vector<double> zs;
  std::vector<int> ys;
  for (const auto& w : wins)
    for (int t = 0; t < w.X.rows(); ++t) {
      zs.push_back(p.proj.dot(w.X.row(t).transpose()));
      ys.push_back(w.y[t]);
    }
  for (size_t i = 0; i < zs.size(); ++i)
    for (size_t j = i + 1; j < zs.size(); ++j) {
      if (ys[i] == ys[j] || zs[i] == zs[j]) continue;
      bool agree = (zs[i] < zs[j]) == (ys[i] < ys[j]);
      (agree ? concordant : discordant)++;
    }
  double tau = double(concordant - discordant) / double(concordant + discordant);
  REQUIRE(tau > 0.8);
}

TEST_CASE("training twice with the same seed is bit identical") {
  auto wins = separable_windows(4, 25, 29);
  ChainTrainConfig cfg;
  CrfParams a = train_crf(wins, cfg);
  CrfParams b = train_crf(wins, cfg);
  REQUIRE(a.node_w == b.node_w);
  REQUIRE(a.trans == b.trans);

  std::vector<LabeledWindow> owins = wins;
  for (auto& w : owins)
    for (auto& y : w.y) y = std::min(y * 3, kCorfStates - 1);
  cfg.seed = 42;
  CorfParams ca = train_corf(owins, cfg);
  CorfParams cb = train_corf(owins, cfg);
  REQUIRE(ca.proj == cb.proj);
  REQUIRE(ca.b1 == cb.b1);
  REQUIRE(ca.log_inc == cb.log_inc);
  REQUIRE(ca.log_scale == cb.log_scale);
  REQUIRE(ca.trans == cb.trans);
}

TEST_CASE("crf and corf json round trips preserve parameters") {
  CrfParams p = CrfParams::zero(3);
  p.node_w.setRandom();
  p.trans.setRandom();
  CrfParams p2 = crf_from_json(crf_to_json(p));
  REQUIRE((p.node_w - p2.node_w).lpNorm<Eigen::Infinity>() < 1e-15);
  REQUIRE((p.trans - p2.trans).lpNorm<Eigen::Infinity>() < 1e-15);

  CorfParams q = CorfParams::init(4, 5);
  q.trans.setRandom();
  CorfParams q2 = corf_from_json(corf_to_json(q));
  REQUIRE((q.proj - q2.proj).lpNorm<Eigen::Infinity>() < 1e-15);
  REQUIRE(q.b1 == q2.b1);
  REQUIRE((q.log_inc - q2.log_inc).lpNorm<Eigen::Infinity>() < 1e-15);
  REQUIRE(q.log_scale == q2.log_scale);
}
