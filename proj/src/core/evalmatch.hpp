#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace covdl {

// |cosine| between every true and estimated column; zero columns give 0.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_est);

struct MatchedPair {
  Eigen::Index true_index = 0;
  Eigen::Index est_index = 0;
  double correlation = 0.0;

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

// Optimal one-to-one matching maximizing the summed |correlation|.
std::vector<MatchedPair> match_columns(const Eigen::MatrixXd& corr);

inline constexpr double kDefaultRecoveryThreshold = 0.99;

struct RecoveryReport {
  std::vector<MatchedPair> matched_pairs;  // ordered by true index
  std::vector<double> sorted_correlations;  // descending
  double recovery_ratio = 0.0;
  double threshold = kDefaultRecoveryThreshold;
  Eigen::Index n_true = 0;
  Eigen::Index n_est = 0;
  Eigen::Index recovered = 0;

  // Flat "key = value" lines.
  std::string to_text() const;
  // rank,true_index,est_index,abs_correlation with one row per matched pair
  // in descending correlation order.
  std::string to_csv() const;
};

RecoveryReport report(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_est,
                      double threshold = kDefaultRecoveryThreshold);

}  // namespace covdl
