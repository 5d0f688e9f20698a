#pragma once

#include "covdomain.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace covdl {

// M x N mixing matrix with non-zero, finite columns (source projection maps).
class MixingMatrix {
 public:
  MixingMatrix() = default;
  explicit MixingMatrix(Eigen::MatrixXd columns);

  const Eigen::MatrixXd& columns() const { return columns_; }
  Index channels() const { return columns_.rows(); }
  Index sources() const { return columns_.cols(); }
  Eigen::VectorXd column_norms() const { return columns_.colwise().norm().transpose(); }

  // max_{i != j} |<a_i/|a_i|, a_j/|a_j|>|; 0 for a single column.
  double coherence() const;

 private:
  Eigen::MatrixXd columns_;
};

double coherence(const Eigen::MatrixXd& columns);

struct MixingDraw {
  MixingMatrix matrix;
  double coherence = 0.0;
  bool cap_met = true;
};

// Gaussian columns normalized to unit norm. Each column is redrawn (at most
// 1000 times) until its coherence with the earlier columns is <= cap; when the
// cap cannot be met the lowest-coherence draw is kept and cap_met is false.
MixingDraw gen_mixing(Index channels, Index sources, double coherence_cap,
                      std::uint64_t seed);

struct ScenarioConfig {
  Index channels = 32;            // M
  Index sources = 32;             // N
  Index active = 32;              // k, active sources per segment
  double duration_seconds = 3960.0;
  double sample_rate = 100.0;
  double segment_seconds = 2.0;
  double power_low = 1.0;
  double power_high = 2.0;
  int ar_order = 5;
  double coherence_cap = 1.0;
  double noise_level = 0.0;       // sensor noise std relative to signal RMS
  std::uint64_t seed = 0;

  // Presets 1, 2, 3: (M, N, k) = (32, 32, 32), (32, 64, 64), (8, 40, 10); all
  // 66 minutes at 100 Hz with 2 s power segments and scales in [1, 2].
  static ScenarioConfig preset(int scenario);

  Index frames() const;
  Index schedule_frames() const;
  void validate() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct SourceDraw {
  Eigen::MatrixXd sources;                      // N x N_d
  std::vector<SegmentRange> schedule;           // power segments
  std::vector<std::vector<Index>> active_sets;  // sorted, one per segment
  Eigen::MatrixXd segment_powers;               // N x S, diag((1/L) X_s X_s^T)
};

// Coefficients drawn so the companion matrix of each source process has
// spectral radius <= this value.
inline constexpr double kMaxSpectralRadius = 0.95;

double ar_spectral_radius(const Eigen::VectorXd& coefficients);

// Stable AR sources with Laplace innovations; per segment a random k-subset is
// active and scaled by U(power_low, power_high), the rest are exactly zero.
SourceDraw gen_sources(const ScenarioConfig& cfg);

ChannelRecording forward_mix(const MixingMatrix& a, const Eigen::MatrixXd& sources,
                             double sample_rate, double noise_level = 0.0,
                             std::uint64_t noise_seed = 0);

struct GroundTruth {
  MixingMatrix a_true;
  bool coherence_cap_met = true;
  std::vector<SegmentRange> schedule;
  std::vector<std::vector<Index>> active_sets;
  Eigen::MatrixXd segment_powers;
  ChannelRecording recording;
};

GroundTruth simulate(const ScenarioConfig& cfg);

// Deterministic stream splitting for seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace covdl
