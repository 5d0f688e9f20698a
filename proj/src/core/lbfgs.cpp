#include "lbfgs.hpp"

#include <cmath>
#include <deque>

namespace covdl {

MinimizeResult minimize(const Objective& f, Eigen::VectorXd x0, const MinimizeOptions& opts,
                        const StationarityMeasure& measure) {
  auto stationarity = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
    return measure ? measure(x, g) : g.norm();
  };

  MinimizeResult out;
  out.x = std::move(x0);
  Eigen::VectorXd g(out.x.size());
  out.value = f(out.x, g);
  out.trace.push_back(out.value);
  out.stationarity = stationarity(out.x, g);
  if (!std::isfinite(out.value)) return out;

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };
  std::deque<Pair> history;
  Eigen::VectorXd x_new(out.x.size()), g_new(out.x.size());

  for (int it = 0; it < opts.max_iters; ++it) {
    if (out.stationarity <= opts.grad_tol) {
      out.converged = true;
      break;
    }
    // Two-loop recursion for the search direction.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(history.size());
    for (std::size_t i = history.size(); i-- > 0;) {
      alpha[i] = history[i].rho * history[i].s.dot(q);
      q -= alpha[i] * history[i].y;
    }
    if (!history.empty()) {
      const auto& last = history.back();
      q *= last.s.dot(last.y) / last.y.squaredNorm();
    } else {
      const double gn = g.norm();
      if (gn > 0) q *= std::min(1.0, 1.0 / gn);
    }
    for (std::size_t i = 0; i < history.size(); ++i) {
      const double beta = history[i].rho * history[i].y.dot(q);
      q += (alpha[i] - beta) * history[i].s;
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      history.clear();
      dir = -g;
      slope = -g.squaredNorm();
      const double gn = g.norm();
      if (gn > 0) dir *= std::min(1.0, 1.0 / gn);
      slope = g.dot(dir);
    }

    double step = 1.0;
    double f_new = out.value;
    bool accepted = false;
    for (int b = 0; b < opts.max_backtracks; ++b) {
      x_new = out.x + step * dir;
      f_new = f(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= out.value + opts.armijo * step * slope &&
          f_new < out.value) {
        accepted = true;
        break;
      }
      step *= opts.backtrack;
    }
    if (!accepted) {
      if (history.empty()) break;
      history.clear();  // retry once from steepest descent
      continue;
    }

    Pair p{x_new - out.x, g_new - g, 0.0};
    const double sy = p.s.dot(p.y);
    out.x.swap(x_new);
    g.swap(g_new);
    out.value = f_new;
    out.trace.push_back(out.value);
    out.stationarity = stationarity(out.x, g);
    out.iterations = it + 1;
    if (opts.memory > 0 && sy > 1e-12 * p.y.squaredNorm()) {
      p.rho = 1.0 / sy;
      history.push_back(std::move(p));
      if (static_cast<int>(history.size()) > opts.memory) history.pop_front();
    }
  }
  if (out.stationarity <= opts.grad_tol) out.converged = true;
  return out;
}

}  // namespace covdl
