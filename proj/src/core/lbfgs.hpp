#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace covdl {

// Returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// Stationarity measure used for the convergence test; defaults to ||grad||_2.
using StationarityMeasure =
    std::function<double(const Eigen::VectorXd& x, const Eigen::VectorXd& grad)>;

struct MinimizeOptions {
  int max_iters = 1000;
  double grad_tol = 1e-6;
  int memory = 10;        // curvature pairs kept; 0 gives steepest descent
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double stationarity = 0.0;
  std::vector<double> trace;  // f at the start and after every accepted step
  int iterations = 0;
  bool converged = false;
};

// Limited-memory BFGS (two-loop recursion) with a backtracking Armijo line
// search. Every accepted step strictly decreases f.
MinimizeResult minimize(const Objective& f, Eigen::VectorXd x0, const MinimizeOptions& opts,
                        const StationarityMeasure& measure = {});

}  // namespace covdl
