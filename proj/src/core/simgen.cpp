#include "simgen.hpp"

#include "errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace covdl {

namespace {

constexpr int kMixingAttempts = 1000;
constexpr int kArAttempts = 100;
constexpr Index kBurnIn = 500;
constexpr double kArCoefficientRange = 0.6;

double max_coherence_against(const Eigen::MatrixXd& unit_cols, Index upto,
                             const Eigen::VectorXd& candidate) {
  double worst = 0.0;
  for (Index j = 0; j < upto; ++j)
    worst = std::max(worst, std::abs(unit_cols.col(j).dot(candidate)));
  return worst;
}

double laplace(std::mt19937_64& rng) {
  // Unit variance: scale b = 1/sqrt(2).
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  double x = u(rng);
  while (std::abs(x) >= 0.5) x = u(rng);
  const double b = 1.0 / std::sqrt(2.0);
  return -b * (x < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(x));
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

MixingMatrix::MixingMatrix(Eigen::MatrixXd columns) : columns_(std::move(columns)) {
  if (columns_.rows() < 1 || columns_.cols() < 1)
    fail(ErrorCode::dimension, "mixing matrix must be non-empty");
  if (!columns_.allFinite()) fail(ErrorCode::invalid_argument, "mixing matrix has non-finite entries");
  for (Index j = 0; j < columns_.cols(); ++j) {
    if (columns_.col(j).norm() == 0.0) {
      std::ostringstream msg;
      msg << "mixing matrix column " << j << " is zero";
      fail(ErrorCode::invalid_argument, msg.str());
    }
  }
}

double coherence(const Eigen::MatrixXd& columns) {
  Eigen::MatrixXd unit = columns;
  for (Index j = 0; j < unit.cols(); ++j) {
    const double n = unit.col(j).norm();
    if (n > 0) unit.col(j) /= n;
  }
  const Eigen::MatrixXd gram = (unit.transpose() * unit).cwiseAbs();
  double worst = 0.0;
  for (Index j = 0; j < gram.cols(); ++j)
    for (Index i = 0; i < j; ++i) worst = std::max(worst, gram(i, j));
  return worst;
}

double MixingMatrix::coherence() const { return covdl::coherence(columns_); }

MixingDraw gen_mixing(Index channels, Index sources, double coherence_cap,
                      std::uint64_t seed) {
  if (channels < 2) fail(ErrorCode::invalid_argument, "gen_mixing needs M >= 2");
  if (sources < 1) fail(ErrorCode::invalid_argument, "gen_mixing needs N >= 1");
  if (!(coherence_cap > 0.0 && coherence_cap <= 1.0))
    fail(ErrorCode::invalid_argument, "coherence cap must lie in (0, 1]");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw_unit = [&] {
    Eigen::VectorXd v(channels);
    do {
      for (Index i = 0; i < channels; ++i) v(i) = gauss(rng);
    } while (v.norm() == 0.0);
    return Eigen::VectorXd(v / v.norm());
  };

  Eigen::MatrixXd cols(channels, sources);
  bool cap_met = true;
  for (Index j = 0; j < sources; ++j) {
    Eigen::VectorXd best;
    double best_coh = 2.0;
    for (int attempt = 0; attempt < kMixingAttempts; ++attempt) {
      Eigen::VectorXd cand = draw_unit();
      const double coh = max_coherence_against(cols, j, cand);
      if (coh < best_coh) {
        best_coh = coh;
        best = std::move(cand);
      }
      if (best_coh <= coherence_cap) break;
    }
    if (best_coh > coherence_cap) cap_met = false;
    cols.col(j) = best;
  }
  MixingDraw out{MixingMatrix(std::move(cols)), 0.0, cap_met};
  out.coherence = out.matrix.coherence();
  return out;
}

ScenarioConfig ScenarioConfig::preset(int scenario) {
  ScenarioConfig cfg;
  switch (scenario) {
    case 1: cfg.channels = 32; cfg.sources = 32; cfg.active = 32; break;
    case 2: cfg.channels = 32; cfg.sources = 64; cfg.active = 64; break;
    case 3: cfg.channels = 8; cfg.sources = 40; cfg.active = 10; break;
    default: {
      std::ostringstream msg;
      msg << "unknown scenario preset " << scenario << " (expected 1, 2 or 3)";
      fail(ErrorCode::invalid_argument, msg.str());
    }
  }
  return cfg;
}

Index ScenarioConfig::frames() const {
  return static_cast<Index>(std::floor(duration_seconds * sample_rate));
}

Index ScenarioConfig::schedule_frames() const {
  return static_cast<Index>(std::floor(segment_seconds * sample_rate));
}

void ScenarioConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::invalid_argument, what); };
  if (channels < 2) bad("scenario needs M >= 2");
  if (sources < 1) bad("scenario needs N >= 1");
  if (active < 1 || active > sources) bad("scenario needs 1 <= k <= N");
  if (!(sample_rate > 0.0)) bad("sample rate must be positive");
  if (!(segment_seconds > 0.0)) bad("segment length must be positive");
  if (schedule_frames() < 2) bad("power segments shorter than 2 frames");
  if (frames() < schedule_frames()) bad("duration shorter than one segment");
  if (!(power_low > 0.0) || !(power_low <= power_high)) bad("power range must satisfy 0 < low <= high");
  if (ar_order < 1) bad("AR order must be positive");
  if (!(coherence_cap > 0.0 && coherence_cap <= 1.0)) bad("coherence cap must lie in (0, 1]");
  if (!(noise_level >= 0.0)) bad("noise level must be non-negative");
}

double ar_spectral_radius(const Eigen::VectorXd& coefficients) {
  const Index p = coefficients.size();
  if (p == 0) return 0.0;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p, p);
  companion.row(0) = coefficients.transpose();
  for (Index i = 1; i < p; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

SourceDraw gen_sources(const ScenarioConfig& cfg) {
  cfg.validate();
  const Index n = cfg.sources;
  const Index frames = cfg.frames();
  const Index p = cfg.ar_order;
  std::mt19937_64 rng(derive_seed(cfg.seed, 1));
  std::uniform_real_distribution<double> coef(-kArCoefficientRange, kArCoefficientRange);

  SourceDraw out;
  out.sources.resize(n, frames);
  Eigen::VectorXd history(p);
  for (Index i = 0; i < n; ++i) {
    Eigen::VectorXd c(p);
    bool stable = false;
    for (int attempt = 0; attempt < kArAttempts && !stable; ++attempt) {
      for (Index j = 0; j < p; ++j) c(j) = coef(rng);
      const double rho = ar_spectral_radius(c);
      if (!std::isfinite(rho) || rho >= 1.0) continue;
      if (rho > kMaxSpectralRadius) {
        // Scaling lag j by g^j scales every root of the characteristic
        // polynomial by g.
        const double g = kMaxSpectralRadius / rho;
        double gj = 1.0;
        for (Index j = 0; j < p; ++j) c(j) *= (gj *= g);
      }
      stable = ar_spectral_radius(c) <= kMaxSpectralRadius + 1e-9;
    }
    if (!stable) fail(ErrorCode::numerical, "could not draw a stable AR process");

    history.setZero();
    auto step = [&] {
      double x = laplace(rng) + c.dot(history);
      for (Index j = p - 1; j > 0; --j) history(j) = history(j - 1);
      history(0) = x;
      return x;
    };
    for (Index t = 0; t < kBurnIn; ++t) step();
    for (Index t = 0; t < frames; ++t) out.sources(i, t) = step();
    const double rms = std::sqrt(out.sources.row(i).squaredNorm() / static_cast<double>(frames));
    if (rms > 0) out.sources.row(i) /= rms;
  }

  const Index len = cfg.schedule_frames();
  for (Index start = 0; start < frames; start += len)
    out.schedule.push_back({start, std::min(len, frames - start)});
  const auto segs = static_cast<Index>(out.schedule.size());

  std::uniform_real_distribution<double> scale(cfg.power_low, cfg.power_high);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  out.segment_powers.resize(n, segs);
  for (Index s = 0; s < segs; ++s) {
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index j = 0; j < cfg.active; ++j) {
      std::uniform_int_distribution<Index> pick(j, n - 1);
      std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<Index> act(perm.begin(), perm.begin() + cfg.active);
    std::sort(act.begin(), act.end());

    const auto& seg = out.schedule[static_cast<std::size_t>(s)];
    std::vector<char> on(static_cast<std::size_t>(n), 0);
    for (Index i : act) on[static_cast<std::size_t>(i)] = 1;
    for (Index i = 0; i < n; ++i) {
      auto block = out.sources.row(i).segment(seg.start, seg.length);
      if (on[static_cast<std::size_t>(i)]) {
        block *= scale(rng);
      } else {
        block.setZero();
      }
      out.segment_powers(i, s) = block.squaredNorm() / static_cast<double>(seg.length);
    }
    out.active_sets.push_back(std::move(act));
  }
  return out;
}

ChannelRecording forward_mix(const MixingMatrix& a, const Eigen::MatrixXd& sources,
                             double sample_rate, double noise_level,
                             std::uint64_t noise_seed) {
  if (a.sources() != sources.rows()) {
    std::ostringstream msg;
    msg << "mixing matrix has " << a.sources() << " columns but source matrix has "
        << sources.rows() << " rows";
    fail(ErrorCode::dimension, msg.str());
  }
  ChannelRecording rec;
  rec.sample_rate = sample_rate;
  rec.data.noalias() = a.columns() * sources;
  if (noise_level > 0.0 && rec.data.size() > 0) {
    const double rms = std::sqrt(rec.data.squaredNorm() / static_cast<double>(rec.data.size()));
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> gauss(0.0, noise_level * rms);
    for (Index t = 0; t < rec.data.cols(); ++t)
      for (Index i = 0; i < rec.data.rows(); ++i) rec.data(i, t) += gauss(rng);
  }
  return rec;
}

GroundTruth simulate(const ScenarioConfig& cfg) {
  cfg.validate();
  MixingDraw mix = gen_mixing(cfg.channels, cfg.sources, cfg.coherence_cap, derive_seed(cfg.seed, 0));
  SourceDraw src = gen_sources(cfg);
  GroundTruth gt;
  gt.recording = forward_mix(mix.matrix, src.sources, cfg.sample_rate, cfg.noise_level,
                             derive_seed(cfg.seed, 2));
  gt.a_true = std::move(mix.matrix);
  gt.coherence_cap_met = mix.cap_met;
  gt.schedule = std::move(src.schedule);
  gt.active_sets = std::move(src.active_sets);
  gt.segment_powers = std::move(src.segment_powers);
  return gt;
}

}  // namespace covdl
