#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace covdl {

// Maximum-weight assignment on a rectangular weight matrix. Returns
// (row, col) pairs, min(rows, cols) of them, sorted by row.
std::vector<std::pair<Eigen::Index, Eigen::Index>> max_weight_assignment(
    const Eigen::MatrixXd& weights);

}  // namespace covdl
