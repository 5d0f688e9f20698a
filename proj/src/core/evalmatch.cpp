#include "evalmatch.hpp"

#include "errors.hpp"
#include "hungarian.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace covdl {

using Eigen::Index;

namespace {

Eigen::MatrixXd unit_columns(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd out = a;
  for (Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (n > 0.0) {
      out.col(j) /= n;
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_est) {
  if (a_true.rows() != a_est.rows()) {
    std::ostringstream msg;
    msg << "channel count mismatch: true maps have " << a_true.rows()
        << " rows, estimates have " << a_est.rows();
    fail(ErrorCode::dimension, msg.str());
  }
  Eigen::MatrixXd corr = (unit_columns(a_true).transpose() * unit_columns(a_est)).cwiseAbs();
  return corr.cwiseMin(1.0);
}

std::vector<MatchedPair> match_columns(const Eigen::MatrixXd& corr) {
  std::vector<MatchedPair> out;
  for (const auto& [i, j] : max_weight_assignment(corr)) out.push_back({i, j, corr(i, j)});
  return out;
}

RecoveryReport report(const Eigen::MatrixXd& a_true, const Eigen::MatrixXd& a_est,
                      double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    fail(ErrorCode::invalid_argument, "threshold must lie in (0, 1]");
  RecoveryReport rep;
  rep.threshold = threshold;
  rep.n_true = a_true.cols();
  rep.n_est = a_est.cols();
  const Eigen::MatrixXd corr = correlation_matrix(a_true, a_est);
  rep.matched_pairs = match_columns(corr);
  for (const auto& p : rep.matched_pairs) {
    rep.sorted_correlations.push_back(p.correlation);
    if (p.correlation >= threshold) ++rep.recovered;
  }
  std::sort(rep.sorted_correlations.begin(), rep.sorted_correlations.end(), std::greater<>());
  rep.recovery_ratio =
      rep.n_true > 0 ? static_cast<double>(rep.recovered) / static_cast<double>(rep.n_true) : 0.0;
  return rep;
}

std::string RecoveryReport::to_text() const {
  std::ostringstream out;
  double mean = 0.0;
  for (double c : sorted_correlations) mean += c;
  if (!sorted_correlations.empty()) mean /= static_cast<double>(sorted_correlations.size());
  out << "n_true = " << n_true << "\n";
  out << "n_est = " << n_est << "\n";
  out << "threshold = " << fmt(threshold) << "\n";
  out << "recovered = " << recovered << "\n";
  out << "recovery_ratio = " << fmt(recovery_ratio) << "\n";
  out << "mean_correlation = " << fmt(mean) << "\n";
  out << "min_correlation = "
      << fmt(sorted_correlations.empty() ? 0.0 : sorted_correlations.back()) << "\n";
  for (std::size_t k = 0; k < matched_pairs.size(); ++k) {
    const auto& p = matched_pairs[k];
    out << "pair." << k << " = " << p.true_index << " " << p.est_index << " "
        << fmt(p.correlation) << "\n";
  }
  return out.str();
}

std::string RecoveryReport::to_csv() const {
  std::vector<MatchedPair> order = matched_pairs;
  std::stable_sort(order.begin(), order.end(), [](const MatchedPair& a, const MatchedPair& b) {
    return a.correlation > b.correlation;
  });
  std::ostringstream out;
  out << "rank,true_index,est_index,abs_correlation\n";
  for (std::size_t k = 0; k < order.size(); ++k)
    out << k << "," << order[k].true_index << "," << order[k].est_index << ","
        << fmt(order[k].correlation) << "\n";
  return out.str();
}

}  // namespace covdl
