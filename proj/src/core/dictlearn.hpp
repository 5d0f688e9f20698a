#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace covdl {

enum class UpdateRule { mod, ksvd };

struct DictLearnConfig {
  Eigen::Index n_atoms = 0;
  Eigen::Index sparsity_k = 1;  // must stay below the data dimension
  int max_iters = 200;
  double tol = 1e-7;            // relative objective change
  std::uint64_t seed = 0;
  UpdateRule update_rule = UpdateRule::mod;
  bool nonneg = true;

  void validate(Eigen::Index data_rows) const;

  friend bool operator==(const DictLearnConfig&, const DictLearnConfig&) = default;
};

// Orthogonal matching pursuit, column by column. Selects at most sparsity_k
// atoms per column; with nonneg set only positively correlated atoms enter
// and the coefficients on the support are fitted by NNLS.
Eigen::MatrixXd sparse_code(const Eigen::MatrixXd& dictionary, const Eigen::MatrixXd& data,
                            Eigen::Index sparsity_k, bool nonneg);

struct DictUpdate {
  Eigen::MatrixXd dictionary;        // unit-norm columns
  Eigen::MatrixXd coeffs;            // rows rescaled so dictionary * coeffs is preserved
  std::vector<Eigen::Index> replaced;  // atoms re-seeded from poorly represented data
};

// One dictionary step with the codes held fixed. Unused atoms are replaced by
// the worst-represented data column (their coefficient rows stay zero).
DictUpdate dict_update(const Eigen::MatrixXd& dictionary, const Eigen::MatrixXd& data,
                       const Eigen::MatrixXd& coeffs, UpdateRule rule, bool nonneg = false);

double representation_error(const Eigen::MatrixXd& data, const Eigen::MatrixXd& dictionary,
                            const Eigen::MatrixXd& coeffs);

struct DictLearnResult {
  Eigen::MatrixXd dictionary;
  Eigen::MatrixXd coeffs;
  std::vector<double> objective;  // squared Frobenius error after each iteration
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

DictLearnResult learn_dictionary(const Eigen::MatrixXd& data, const DictLearnConfig& cfg);

// Local-search layer over the alternation for hard, coherent problems.
struct SearchConfig {
  int restarts = 5;                // seeded starts; the lowest objective wins
  int stall_iters = 30;            // iterations without progress before an atom swap
  int patience = 5;                // swaps in a row without progress end a start
  double duplicate_corr = 0.9999;  // |cos| between atoms treated as a duplicate
  int swap_atoms = 3;              // swapped atom drawn from the cheapest this many
  int swap_columns = 5;            // replacement drawn from the worst this many columns

  void validate() const;

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

// Maps an updated atom onto a constraint set (the result is renormalized).
using AtomProjection = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Each start runs cfg.max_iters alternations of sparse_code and dict_update
// (followed by the projection, when given). Near-duplicate atoms are re-seeded
// from the worst-represented residual. After stall_iters iterations without a
// relative gain of cfg.tol, the search returns to the best dictionary so far
// and swaps one cheap atom (smallest removal cost) for the
// projection of a poorly represented residual column. The objective trace
// holds the best objective reached so far, so it never increases.
DictLearnResult learn_dictionary_search(const Eigen::MatrixXd& data, const DictLearnConfig& cfg,
                                        const SearchConfig& search,
                                        const AtomProjection& projection = {});

}  // namespace covdl
