#pragma once

#include <Eigen/Dense>

#include <vector>

namespace covdl {

using Index = Eigen::Index;

// How off-diagonal entries are scaled when a symmetric matrix is stacked.
// `plain` stores every lower-triangular entry once and unscaled. `frobenius`
// multiplies off-diagonals by sqrt(2) so that the Euclidean norm of the
// stacked vector equals the Frobenius norm of the matrix.
enum class VechWeighting { plain, frobenius };

// Length of the half-vectorization of an M x M matrix: M(M+1)/2.
Index lifted_dim(Index channels);

// Inverse of lifted_dim. Throws ErrorCode::dimension when `length` is not a
// triangular number with M >= 1.
Index channels_from_lifted_dim(Index length);

// Lower triangle in column-major order: (0,0),(1,0),...,(M-1,0),(1,1),...
// The input is symmetrized as (S + S^T)/2; asymmetry beyond 1e-8 (relative to
// the largest entry) is rejected.
Eigen::VectorXd vech(const Eigen::MatrixXd& s,
                     VechWeighting weighting = VechWeighting::plain);

Eigen::MatrixXd vech_inv(const Eigen::VectorXd& v,
                         VechWeighting weighting = VechWeighting::plain);

// vech(a a^T) computed without forming the outer product.
Eigen::VectorXd lift_outer(const Eigen::VectorXd& a,
                           VechWeighting weighting = VechWeighting::plain);

struct ChannelRecording {
  Eigen::MatrixXd data;  // channels x frames
  double sample_rate = 1.0;

  Index channels() const { return data.rows(); }
  Index frames() const { return data.cols(); }

  // M >= 2, N_d >= 2, sample_rate > 0, finite entries.
  void validate() const;
};

struct SegmentationPlan {
  double segment_seconds = 2.0;
  double overlap_ratio = 0.5;
  bool center = false;
  VechWeighting weighting = VechWeighting::plain;

  Index segment_frames(double sample_rate) const;
  Index stride(double sample_rate) const;
};

struct SegmentRange {
  Index start = 0;
  Index length = 0;

  friend bool operator==(const SegmentRange&, const SegmentRange&) = default;
};

// Full-length segments only; a trailing partial segment is dropped.
std::vector<SegmentRange> segment(const ChannelRecording& rec,
                                  const SegmentationPlan& plan);

struct CovarianceDataset {
  Eigen::MatrixXd lifted;  // M(M+1)/2 x S, one vech(Sigma_s) per column
  Index channels = 0;
  Index segment_frames = 0;
  VechWeighting weighting = VechWeighting::plain;
  std::vector<SegmentRange> segments;

  Index segment_count() const { return lifted.cols(); }
};

// Column s is vech((1/L_s) Y_s Y_s^T). Segments are not mean-centered unless
// plan.center is set.
CovarianceDataset lift(const ChannelRecording& rec, const SegmentationPlan& plan);

// Wraps already-lifted columns (e.g. exact model data) as a dataset.
CovarianceDataset dataset_from_lifted(Eigen::MatrixXd lifted,
                                      VechWeighting weighting = VechWeighting::plain);

}  // namespace covdl
