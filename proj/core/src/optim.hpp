#pragma once

// Internal: box-constrained L-BFGS with projected gradients and a
// backtracking Armijo line search. Small dimensions only (variance
// parameters), so the history-based update is plenty.

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <vector>

namespace stvcm::detail {

struct LbfgsOptions {
  int max_iter = 500;
  double grad_tol = 1e-7;    // on the projected gradient, scaled by 1 + |f|
  int history = 8;
  double f_stall_tol = 1e-13;
  int stall_patience = 3;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // accepted objective values, nonincreasing
};

// fg(x, grad) -> f; grad filled when the pointer is non-null.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

inline Eigen::VectorXd clamp_box(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                                 const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Gradient components pushing outside an active bound are zeroed.
inline Eigen::VectorXd project_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                                        const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] <= lo[i] && g[i] > 0) pg[i] = 0;
    if (x[i] >= hi[i] && g[i] < 0) pg[i] = 0;
  }
  return pg;
}

inline LbfgsResult lbfgs_minimize(const Objective& fg, Eigen::VectorXd x0,
                                  const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                  const LbfgsOptions& opts = {}) {
  LbfgsResult res;
  const Eigen::Index d = x0.size();
  Eigen::VectorXd x = clamp_box(x0, lo, hi);
  Eigen::VectorXd g(d);
  double f = fg(x, &g);
  res.trace.push_back(f);

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  int stalls = 0;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    res.iterations = iter;
    Eigen::VectorXd pg = project_gradient(x, g, lo, hi);
    res.grad = pg;
    if (pg.lpNorm<Eigen::Infinity>() <= opts.grad_tol * (1.0 + std::abs(f))) {
      res.converged = true;
      break;
    }

    // Two-loop recursion on the projected gradient.
    Eigen::VectorXd q = pg;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      if (std::isfinite(gamma) && gamma > 0) q *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    if (dir.dot(pg) >= 0) dir = -pg;  // fall back to steepest descent

    // Backtracking Armijo on the projected path.
    double step = 1.0;
    const double slope = dir.dot(pg);
    double f_new = f;
    Eigen::VectorXd x_new = x;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = clamp_box(x + step * dir, lo, hi);
      if ((x_new - x).lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = fg(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No decrease along this direction; try plain projected gradient once.
      step = 1.0;
      bool fallback = false;
      for (int ls = 0; ls < 40; ++ls) {
        x_new = clamp_box(x - step * pg, lo, hi);
        if ((x_new - x).lpNorm<Eigen::Infinity>() == 0.0) break;
        f_new = fg(x_new, nullptr);
        if (std::isfinite(f_new) && f_new < f) {
          fallback = true;
          break;
        }
        step *= 0.5;
      }
      if (!fallback) {
        res.converged = pg.lpNorm<Eigen::Infinity>() <=
                        std::sqrt(opts.grad_tol) * (1.0 + std::abs(f));
        break;  // locked: either converged loosely or a genuine stall
      }
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    Eigen::VectorXd g_new(d);
    const double f_check = fg(x_new, &g_new);
    (void)f_check;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double drop = f - f_new;
    x = x_new;
    g = g_new;
    f = f_new;
    res.trace.push_back(f);
    if (drop <= opts.f_stall_tol * (1.0 + std::abs(f))) {
      if (++stalls >= opts.stall_patience) {
        Eigen::VectorXd pg2 = project_gradient(x, g, lo, hi);
        res.converged = true;
        res.grad = pg2;
        break;
      }
    } else {
      stalls = 0;
    }
  }

  res.x = x;
  res.f = f;
  res.grad = project_gradient(x, g, lo, hi);
  return res;
}

}  // namespace stvcm::detail
