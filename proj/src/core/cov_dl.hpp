#pragma once

#include "covdomain.hpp"
#include "dictlearn.hpp"
#include "simgen.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace covdl {

enum class Mode { covdl1, covdl2 };

const char* mode_name(Mode mode);

// covdl1 when the lifted dictionary is overcomplete (N >= M(M+1)/2), covdl2
// otherwise.
Mode select_mode(Index channels, Index sources);

// Lifted dictionary: column i is vech(a_i a_i^T).
Eigen::MatrixXd lifted_dictionary(const Eigen::MatrixXd& a,
                                  VechWeighting weighting = VechWeighting::plain);

struct Rank1 {
  Eigen::VectorXd a;        // sqrt(lambda_1) * b_1, first significant entry positive
  double lambda = 0.0;      // largest eigenvalue of vech_inv(d)
  double residual = 0.0;    // ||vech_inv(d) - a a^T||_F
  bool degenerate = false;  // lambda_1 <= 0, a is zero
  bool tied = false;        // lambda_1 has multiplicity > 1
};

// Closest rank-1 PSD matrix a a^T to vech_inv(d) in Frobenius norm.
Rank1 rank1_extract(const Eigen::VectorXd& d, VechWeighting weighting = VechWeighting::plain);

struct CovDlResult {
  Eigen::MatrixXd a_hat;  // M x N
  Mode mode = Mode::covdl1;
  std::vector<double> objective_trace;
  bool converged = true;

  // covdl1
  Eigen::MatrixXd lifted;                 // learned dictionary before extraction
  Eigen::VectorXd rank1_residuals;
  std::vector<Index> degenerate_columns;
  std::vector<Index> tied_columns;

  // covdl2
  double projector_mismatch = 0.0;
  double stationarity = 0.0;
  double explained_energy = 0.0;
  int best_restart = 0;
  std::vector<double> restart_values;

  std::vector<std::string> warnings;
};

// Lifted dictionary learning followed by rank-1 extraction. With a search
// config the local search of learn_dictionary_search is used; rank1_atoms then
// keeps every atom on the set of lifted outer products during the search.
// Without one, the plain alternation of learn_dictionary runs.
CovDlResult covdl1(const CovarianceDataset& dataset, Index sources, DictLearnConfig cfg,
                   const std::optional<SearchConfig>& search = SearchConfig{},
                   bool rank1_atoms = true);

struct SubspaceBasis {
  Eigen::MatrixXd u;  // orthonormal columns
  Eigen::VectorXd singular_values;
  double explained_energy = 0.0;  // energy fraction captured by the first N directions
};

// Top-N left singular vectors of the uncentered lifted data.
SubspaceBasis fit_subspace(const CovarianceDataset& dataset, Index sources);

struct ProjectorValue {
  double value = 0.0;
  Eigen::MatrixXd gradient;  // M x N, d value / d A
  bool regularized = false;
};

// Eigenvalue floor of Dn^T Dn (Dn: lifted columns scaled to unit norm) below
// which the projector inverse is regularized by eps.
inline constexpr double kProjectorRegularizeBelow = 1e-8;
inline constexpr double kProjectorEpsilon = 1e-10;

// ||P_D - P_U||_F^2 with D = lifted_dictionary(A) and its gradient w.r.t. A.
ProjectorValue projector_objective(const Eigen::MatrixXd& a, const Eigen::MatrixXd& u,
                                   VechWeighting weighting = VechWeighting::plain);

struct Covdl2Config {
  int restarts = 5;
  int max_iters = 2000;
  double grad_tol = 1e-6;
  std::uint64_t seed = 0;
  bool use_lbfgs = true;  // false falls back to steepest descent
  int memory = 10;
  std::optional<Eigen::MatrixXd> initial;  // used for the first restart

  void validate() const;
};

CovDlResult covdl2(const CovarianceDataset& dataset, Index sources, const Covdl2Config& cfg);

struct PowerEstimate {
  Eigen::MatrixXd powers;     // N x S, non-negative
  Eigen::VectorXd residuals;  // per segment ||vech(Sigma_s) - D delta_s||
};

PowerEstimate estimate_powers(const Eigen::MatrixXd& a, const CovarianceDataset& dataset);

struct LearnOptions {
  Index sources = 0;
  std::optional<Mode> mode;  // automatic when unset
  DictLearnConfig dictionary;
  std::optional<SearchConfig> dictionary_search = SearchConfig{};
  bool rank1_atoms = true;
  Covdl2Config optimizer;
  bool estimate_segment_powers = true;
};

struct LearnOutcome {
  CovDlResult result;
  PowerEstimate powers;
};

// Full pipeline on a lifted dataset: mode selection, the chosen strategy and
// per-segment power estimation.
LearnOutcome learn(const CovarianceDataset& dataset, const LearnOptions& options);

// Column-wise unit normalization with the largest-magnitude entry made
// positive; zero columns are left as zero.
Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& a);

}  // namespace covdl
