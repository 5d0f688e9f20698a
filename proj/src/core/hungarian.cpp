#include "hungarian.hpp"

#include <algorithm>
#include <limits>

namespace covdl {

using Eigen::Index;

// Shortest augmenting path with potentials on the square cost matrix
// max(W) - W, padded with zero-weight dummy rows/columns.
std::vector<std::pair<Index, Index>> max_weight_assignment(const Eigen::MatrixXd& weights) {
  const Index rows = weights.rows();
  const Index cols = weights.cols();
  std::vector<std::pair<Index, Index>> pairs;
  if (rows == 0 || cols == 0) return pairs;

  const Index n = std::max(rows, cols);
  const double top = std::max(0.0, weights.maxCoeff());
  auto cost = [&](Index i, Index j) {
    const double w = (i < rows && j < cols) ? weights(i, j) : 0.0;
    return top - w;
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (Index j = 1; j <= n; ++j) {
    const Index i = p[j] - 1;
    if (i < rows && j - 1 < cols) pairs.emplace_back(i, j - 1);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace covdl
