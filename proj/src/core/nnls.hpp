#pragma once

#include <Eigen/Dense>

namespace covdl {

struct NnlsResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = true;
};

// min ||A x - b||_2 subject to x >= 0, Lawson-Hanson active set method.
NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iters = 0,
                double tol = 1e-12);

// Same problem given only the normal equations: gram = A^T A, atb = A^T b.
// Cheaper when many right-hand sides share A; residual_norm is left at 0.
NnlsResult nnls_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& atb,
                     int max_iters = 0, double tol = 1e-12);

}  // namespace covdl
