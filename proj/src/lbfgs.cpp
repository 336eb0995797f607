#include "dab/lbfgs.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace dab {

LbfgsResult minimize_lbfgs(const Objective &f, const Vector &x0, const LbfgsConfig &cfg) {
  LbfgsResult res;
  Vector x = x0;
  Vector g(x.size());
  double fx = f(x, g);
  const double g0 = g.norm();
  res.cost.push_back(fx);
  res.grad_norm.push_back(g0);
  if (g0 == 0.0) {
    res.x = x;
    res.exit_reason = "converged";
    return res;
  }

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vector x_new(x.size()), g_new(x.size());

  for (int it = 0; it < cfg.max_iterations; ++it) {
    // Two-loop recursion for d = -H g.
    Vector q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vector d = -q;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g;
      slope = -g.squaredNorm();
    }

    // Weak Wolfe bisection: shrink on an Armijo failure, grow or bisect
    // while the slope is still too steep. Curvature keeps s.y > 0.
    double step = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    bool accepted = false, armijo_seen = false;
    double f_new = fx, best_step = 0.0;
    for (int b = 0; b < cfg.max_backtracks; ++b) {
      x_new = x + step * d;
      f_new = f(x_new, g_new);
      if (!std::isfinite(f_new) || f_new > fx + cfg.armijo_c1 * step * slope) {
        hi = step;
      } else {
        armijo_seen = true;
        best_step = step;
        if (g_new.dot(d) >= cfg.wolfe_c2 * slope) {
          accepted = true;
          break;
        }
        lo = step;
      }
      step = std::isinf(hi) ? 2.0 * lo : 0.5 * (lo + hi);
    }
    if (!accepted && armijo_seen) {
      // Sufficient decrease without the curvature condition; keep the step.
      x_new = x + best_step * d;
      f_new = f(x_new, g_new);
      accepted = true;
    }
    if (!accepted || !(f_new <= fx)) {
      res.exit_reason = "stalled";
      break;
    }

    Vector s = x_new - x;
    Vector yv = g_new - g;
    const double sy = s.dot(yv);
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    ++res.iterations;
    res.cost.push_back(fx);
    res.grad_norm.push_back(g.norm());

    if (sy > 1e-14 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (int(s_hist.size()) > cfg.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    if (g.norm() / g0 < cfg.grad_tol) {
      res.exit_reason = "converged";
      break;
    }
  }
  if (res.exit_reason.empty()) res.exit_reason = "max_iterations";
  res.x = x;
  return res;
}

}  // namespace dab
