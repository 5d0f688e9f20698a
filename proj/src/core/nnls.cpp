#include "nnls.hpp"

#include "errors.hpp"

#include <cmath>
#include <vector>

namespace covdl {

namespace {

// Unconstrained least squares restricted to the passive columns.
Eigen::VectorXd solve_passive(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                              const std::vector<Eigen::Index>& passive) {
  Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(passive.size()));
  for (std::size_t j = 0; j < passive.size(); ++j)
    sub.col(static_cast<Eigen::Index>(j)) = a.col(passive[j]);
  return sub.colPivHouseholderQr().solve(b);
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iters,
                double tol) {
  if (a.rows() != b.size()) fail(ErrorCode::dimension, "nnls: rows of A must match b");
  const Eigen::Index n = a.cols();
  if (max_iters <= 0) max_iters = static_cast<int>(3 * n + 10);

  NnlsResult out;
  out.x = Eigen::VectorXd::Zero(n);
  std::vector<char> in_passive(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> passive;
  const double scale = tol * std::max(1.0, a.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff());

  Eigen::VectorXd w = a.transpose() * (b - a * out.x);
  int iter = 0;
  for (;;) {
    Eigen::Index best = -1;
    double best_w = scale;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!in_passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    if (++iter > max_iters) {
      out.converged = false;
      break;
    }
    in_passive[static_cast<std::size_t>(best)] = 1;
    passive.push_back(best);

    for (;;) {
      Eigen::VectorXd z = solve_passive(a, b, passive);
      bool feasible = true;
      for (Eigen::Index j = 0; j < z.size(); ++j) feasible = feasible && z(j) > 0.0;
      if (feasible) {
        for (std::size_t j = 0; j < passive.size(); ++j)
          out.x(passive[j]) = z(static_cast<Eigen::Index>(j));
        break;
      }
      // Step toward z until the first passive variable hits zero.
      double alpha = 1.0;
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const double zj = z(static_cast<Eigen::Index>(j));
        if (zj <= 0.0) {
          const double xj = out.x(passive[j]);
          alpha = std::min(alpha, xj / (xj - zj));
        }
      }
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const Eigen::Index idx = passive[j];
        out.x(idx) += alpha * (z(static_cast<Eigen::Index>(j)) - out.x(idx));
      }
      std::vector<Eigen::Index> kept;
      for (Eigen::Index idx : passive) {
        if (out.x(idx) <= tol * std::max(1.0, out.x.cwiseAbs().maxCoeff())) {
          out.x(idx) = 0.0;
          in_passive[static_cast<std::size_t>(idx)] = 0;
        } else {
          kept.push_back(idx);
        }
      }
      passive.swap(kept);
      if (passive.empty()) break;
    }
    w = a.transpose() * (b - a * out.x);
  }
  out.iterations = iter;
  out.residual_norm = (a * out.x - b).norm();
  return out;
}

NnlsResult nnls_gram(const Eigen::MatrixXd& gram, const Eigen::VectorXd& atb, int max_iters,
                     double tol) {
  const Eigen::Index n = gram.cols();
  if (gram.rows() != n || atb.size() != n)
    fail(ErrorCode::dimension, "nnls_gram: gram must be square and match A^T b");
  if (max_iters <= 0) max_iters = static_cast<int>(3 * n + 10);

  NnlsResult out;
  out.x = Eigen::VectorXd::Zero(n);
  std::vector<char> in_passive(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> passive;
  const double scale = tol * std::max(1.0, atb.cwiseAbs().maxCoeff());

  auto solve = [&] {
    const auto p = static_cast<Eigen::Index>(passive.size());
    Eigen::MatrixXd sub(p, p);
    Eigen::VectorXd rhs(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      rhs(i) = atb(passive[static_cast<std::size_t>(i)]);
      for (Eigen::Index j = 0; j < p; ++j)
        sub(i, j) = gram(passive[static_cast<std::size_t>(i)], passive[static_cast<std::size_t>(j)]);
    }
    return Eigen::VectorXd(sub.ldlt().solve(rhs));
  };

  Eigen::VectorXd w = atb;
  int iter = 0;
  for (;;) {
    Eigen::Index best = -1;
    double best_w = scale;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!in_passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) break;
    if (++iter > max_iters) {
      out.converged = false;
      break;
    }
    in_passive[static_cast<std::size_t>(best)] = 1;
    passive.push_back(best);

    for (;;) {
      const Eigen::VectorXd z = solve();
      bool feasible = z.allFinite();
      for (Eigen::Index j = 0; feasible && j < z.size(); ++j) feasible = z(j) > 0.0;
      if (feasible) {
        for (std::size_t j = 0; j < passive.size(); ++j)
          out.x(passive[j]) = z(static_cast<Eigen::Index>(j));
        break;
      }
      double alpha = 1.0;
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const double zj = z(static_cast<Eigen::Index>(j));
        if (!(zj > 0.0)) {
          const double xj = out.x(passive[j]);
          alpha = std::min(alpha, std::isfinite(zj) ? xj / (xj - zj) : 0.0);
        }
      }
      for (std::size_t j = 0; j < passive.size(); ++j) {
        const Eigen::Index idx = passive[j];
        const double zj = z(static_cast<Eigen::Index>(j));
        if (std::isfinite(zj)) out.x(idx) += alpha * (zj - out.x(idx));
      }
      std::vector<Eigen::Index> kept;
      const double floor = tol * std::max(1.0, out.x.cwiseAbs().maxCoeff());
      for (Eigen::Index idx : passive) {
        if (out.x(idx) <= floor) {
          out.x(idx) = 0.0;
          in_passive[static_cast<std::size_t>(idx)] = 0;
        } else {
          kept.push_back(idx);
        }
      }
      passive.swap(kept);
      if (passive.empty()) break;
    }
    w = atb - gram * out.x;
  }
  out.iterations = iter;
  return out;
}

}  // namespace covdl
