#pragma once

// Limited-memory BFGS with a strong-Wolfe backtracking/zoom line search.
// Deterministic: no randomness, fixed evaluation order.

#include <Eigen/Dense>
#include <deque>
#include <functional>

namespace fera {

struct LbfgsOptions {
  int max_iter = 200;
  double grad_tol = 1e-5;  // infinity norm of the gradient
  int history = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double fx = 0.0;
  int iterations = 0;
  bool converged = false;
};

// objective(x, grad) must fill grad and return f(x).
inline LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& x0, const LbfgsOptions& opts = {}) {
  const int n = static_cast<int>(x0.size());
  Eigen::VectorXd x = x0, g(n), g_new(n), x_new(n);
  double fx = objective(x, g);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;

  LbfgsResult res;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      res.iterations = iter;
      break;
    }
    // two-loop recursion
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd d = -q;
    double dg = d.dot(g);
    if (dg > -1e-16) {  // not a descent direction; restart with steepest descent
      d = -g;
      dg = d.dot(g);
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // strong-Wolfe line search (bracket + bisection zoom)
    double step = 1.0, lo = 0.0, hi = 0.0;
    bool have_hi = false;
    double f_new = fx;
    bool ok = false;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      x_new = x + step * d;
      f_new = objective(x_new, g_new);
      if (!std::isfinite(f_new) || f_new > fx + opts.c1 * step * dg) {
        hi = step;
        have_hi = true;
      } else if (std::abs(g_new.dot(d)) > opts.c2 * std::abs(dg)) {
        lo = step;
      } else {
        ok = true;
        break;
      }
      step = have_hi ? 0.5 * (lo + hi) : step * 2.0;
      if (step < 1e-16) break;
    }
    if (!ok && (!std::isfinite(f_new) || f_new >= fx)) {
      // no acceptable step; give up at the current iterate
      res.iterations = iter;
      break;
    }

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd yv = g_new - g;
    double sy = s.dot(yv);
    if (sy > 1e-12) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    g = g_new;
    fx = f_new;
    res.iterations = iter + 1;
  }
  if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) res.converged = true;
  res.x = x;
  res.fx = fx;
  return res;
}

}  // namespace fera
