#include "covdomain.hpp"

#include "errors.hpp"
#include "parallel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace covdl {

namespace {

double off_diagonal_scale(VechWeighting w) {
  return w == VechWeighting::frobenius ? std::numbers::sqrt2 : 1.0;
}

}  // namespace

Index lifted_dim(Index channels) {
  if (channels < 0) fail(ErrorCode::dimension, "negative channel count");
  return channels * (channels + 1) / 2;
}

Index channels_from_lifted_dim(Index length) {
  if (length >= 1) {
    const auto guess = static_cast<Index>(
        std::llround((std::sqrt(8.0 * static_cast<double>(length) + 1.0) - 1.0) / 2.0));
    for (Index m = std::max<Index>(1, guess - 1); m <= guess + 1; ++m) {
      if (lifted_dim(m) == length) return m;
    }
  }
  std::ostringstream msg;
  msg << "length " << length << " is not a triangular number M(M+1)/2";
  fail(ErrorCode::dimension, msg.str());
}

Eigen::VectorXd vech(const Eigen::MatrixXd& s, VechWeighting weighting) {
  if (s.rows() != s.cols()) {
    std::ostringstream msg;
    msg << "vech needs a square matrix, got " << s.rows() << "x" << s.cols();
    fail(ErrorCode::dimension, msg.str());
  }
  const Index m = s.rows();
  const double scale = m > 0 ? std::max(1.0, s.cwiseAbs().maxCoeff()) : 1.0;
  if (m > 0 && (s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    fail(ErrorCode::invalid_argument, "vech input is not symmetric");

  const double w = off_diagonal_scale(weighting);
  Eigen::VectorXd v(lifted_dim(m));
  Index k = 0;
  for (Index c = 0; c < m; ++c) {
    v(k++) = s(c, c);
    for (Index r = c + 1; r < m; ++r) v(k++) = w * ((s(r, c) + s(c, r)) / 2.0);
  }
  return v;
}

Eigen::MatrixXd vech_inv(const Eigen::VectorXd& v, VechWeighting weighting) {
  const Index m = channels_from_lifted_dim(v.size());
  const double w = off_diagonal_scale(weighting);
  Eigen::MatrixXd s(m, m);
  Index k = 0;
  for (Index c = 0; c < m; ++c) {
    s(c, c) = v(k++);
    for (Index r = c + 1; r < m; ++r) {
      const double x = weighting == VechWeighting::plain ? v(k) : v(k) / w;
      s(r, c) = x;
      s(c, r) = x;
      ++k;
    }
  }
  return s;
}

Eigen::VectorXd lift_outer(const Eigen::VectorXd& a, VechWeighting weighting) {
  const Index m = a.size();
  const double w = off_diagonal_scale(weighting);
  Eigen::VectorXd v(lifted_dim(m));
  Index k = 0;
  for (Index c = 0; c < m; ++c) {
    v(k++) = a(c) * a(c);
    for (Index r = c + 1; r < m; ++r) v(k++) = w * a(r) * a(c);
  }
  return v;
}

void ChannelRecording::validate() const {
  if (channels() < 2) fail(ErrorCode::invalid_argument, "recording needs at least 2 channels");
  if (frames() < 2) fail(ErrorCode::invalid_argument, "recording needs at least 2 frames");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
    fail(ErrorCode::invalid_argument, "sample rate must be positive");
  if (!data.allFinite()) fail(ErrorCode::invalid_argument, "recording has non-finite entries");
}

Index SegmentationPlan::segment_frames(double sample_rate) const {
  return static_cast<Index>(std::floor(segment_seconds * sample_rate));
}

Index SegmentationPlan::stride(double sample_rate) const {
  const auto raw = static_cast<Index>(
      std::floor(static_cast<double>(segment_frames(sample_rate)) * (1.0 - overlap_ratio)));
  return std::max<Index>(1, raw);
}

std::vector<SegmentRange> segment(const ChannelRecording& rec,
                                  const SegmentationPlan& plan) {
  rec.validate();
  if (!(plan.segment_seconds > 0.0))
    fail(ErrorCode::invalid_argument, "segment length must be positive");
  if (!(plan.overlap_ratio >= 0.0 && plan.overlap_ratio < 1.0))
    fail(ErrorCode::invalid_argument, "overlap ratio must lie in [0, 1)");
  const Index len = plan.segment_frames(rec.sample_rate);
  if (len < 2) fail(ErrorCode::invalid_argument, "segment shorter than 2 frames");
  if (rec.frames() < len) {
    std::ostringstream msg;
    msg << "recording has " << rec.frames() << " frames, shorter than one segment of "
        << len;
    fail(ErrorCode::empty_plan, msg.str());
  }
  const Index stride = plan.stride(rec.sample_rate);
  std::vector<SegmentRange> out;
  for (Index start = 0; start + len <= rec.frames(); start += stride)
    out.push_back({start, len});
  return out;
}

CovarianceDataset lift(const ChannelRecording& rec, const SegmentationPlan& plan) {
  CovarianceDataset ds;
  ds.segments = segment(rec, plan);
  ds.channels = rec.channels();
  ds.segment_frames = ds.segments.front().length;
  ds.weighting = plan.weighting;
  ds.lifted.resize(lifted_dim(ds.channels), static_cast<Index>(ds.segments.size()));

  parallel_for(ds.segments.size(), [&](std::size_t s) {
    const auto& seg = ds.segments[s];
    Eigen::MatrixXd block = rec.data.middleCols(seg.start, seg.length);
    if (plan.center) block.colwise() -= block.rowwise().mean();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(ds.channels, ds.channels);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(block);
    Eigen::MatrixXd full = cov.selfadjointView<Eigen::Lower>();
    full /= static_cast<double>(seg.length);
    ds.lifted.col(static_cast<Index>(s)) = vech(full, plan.weighting);
  });
  return ds;
}

CovarianceDataset dataset_from_lifted(Eigen::MatrixXd lifted, VechWeighting weighting) {
  CovarianceDataset ds;
  ds.channels = channels_from_lifted_dim(lifted.rows());
  if (lifted.cols() < 1) fail(ErrorCode::empty_plan, "dataset needs at least one column");
  ds.lifted = std::move(lifted);
  ds.weighting = weighting;
  return ds;
}

}  // namespace covdl
