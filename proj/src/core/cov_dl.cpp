#include "cov_dl.hpp"

#include "errors.hpp"
#include "lbfgs.hpp"
#include "nnls.hpp"
#include "parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace covdl {

namespace {

double off_diagonal_scale(VechWeighting w) {
  return w == VechWeighting::frobenius ? std::sqrt(2.0) : 1.0;
}

// Gradient w.r.t. a of <g, lift_outer(a)>: S a with S(c,c) = 2 g_cc and
// S(r,c) = S(c,r) = w g_rc.
Eigen::VectorXd pull_back_lift(const Eigen::VectorXd& g, const Eigen::VectorXd& a,
                               VechWeighting weighting) {
  const Index m = a.size();
  const double w = off_diagonal_scale(weighting);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  Index k = 0;
  for (Index c = 0; c < m; ++c) {
    out(c) += 2.0 * g(k++) * a(c);
    for (Index r = c + 1; r < m; ++r, ++k) {
      out(r) += w * g(k) * a(c);
      out(c) += w * g(k) * a(r);
    }
  }
  return out;
}

bool has_zero_column(const Eigen::MatrixXd& a) {
  for (Index j = 0; j < a.cols(); ++j)
    if (a.col(j).squaredNorm() == 0.0) return true;
  return false;
}

bool powers_look_constant(const Eigen::MatrixXd& lifted) {
  if (lifted.cols() < 2) return true;
  const Eigen::VectorXd mean = lifted.rowwise().mean();
  const double scale = std::max(mean.norm(), std::numeric_limits<double>::min());
  for (Index s = 0; s < lifted.cols(); ++s)
    if ((lifted.col(s) - mean).norm() > 1e-10 * scale) return false;
  return true;
}

}  // namespace

const char* mode_name(Mode mode) { return mode == Mode::covdl1 ? "covdl1" : "covdl2"; }

Mode select_mode(Index channels, Index sources) {
  if (channels < 2) fail(ErrorCode::invalid_argument, "select_mode needs M >= 2");
  if (sources < 1) fail(ErrorCode::invalid_argument, "select_mode needs N >= 1");
  return sources >= lifted_dim(channels) ? Mode::covdl1 : Mode::covdl2;
}

Eigen::MatrixXd lifted_dictionary(const Eigen::MatrixXd& a, VechWeighting weighting) {
  Eigen::MatrixXd d(lifted_dim(a.rows()), a.cols());
  for (Index j = 0; j < a.cols(); ++j) d.col(j) = lift_outer(a.col(j), weighting);
  return d;
}

Eigen::MatrixXd normalize_columns(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd out = a;
  for (Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (!(n > 0.0)) {
      out.col(j).setZero();
      continue;
    }
    out.col(j) /= n;
    Index pivot = 0;
    out.col(j).cwiseAbs().maxCoeff(&pivot);
    if (out(pivot, j) < 0.0) out.col(j) = -out.col(j);
  }
  return out;
}

Rank1 rank1_extract(const Eigen::VectorXd& d, VechWeighting weighting) {
  const Eigen::MatrixXd s = vech_inv(d, weighting);
  const Index m = s.rows();
  Rank1 out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  if (eig.info() != Eigen::Success) fail(ErrorCode::numerical, "eigendecomposition failed");
  const Eigen::VectorXd& vals = eig.eigenvalues();  // ascending
  out.lambda = vals(m - 1);
  const double scale = std::max(vals.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if (m > 1 && vals(m - 1) - vals(m - 2) <= 1e-10 * scale) out.tied = true;
  if (!(out.lambda > 0.0)) {
    out.degenerate = true;
    out.a = Eigen::VectorXd::Zero(m);
    out.residual = s.norm();
    return out;
  }
  out.a = std::sqrt(out.lambda) * eig.eigenvectors().col(m - 1);
  const double tiny = 1e-12 * out.a.norm();
  for (Index i = 0; i < m; ++i) {
    if (std::abs(out.a(i)) > tiny) {
      if (out.a(i) < 0.0) out.a = -out.a;
      break;
    }
  }
  out.residual = (s - out.a * out.a.transpose()).norm();
  return out;
}

CovDlResult covdl1(const CovarianceDataset& dataset, Index sources, DictLearnConfig cfg,
                   const std::optional<SearchConfig>& search, bool rank1_atoms) {
  const Index dim = dataset.lifted.rows();
  if (lifted_dim(dataset.channels) != dim)
    fail(ErrorCode::dimension, "dataset rows do not match M(M+1)/2");
  cfg.n_atoms = sources;
  cfg.validate(dim);

  CovDlResult out;
  out.mode = Mode::covdl1;
  if (sources < dim) {
    std::ostringstream msg;
    msg << "covdl1 with N = " << sources << " < M(M+1)/2 = " << dim
        << "; the lifted dictionary is not overcomplete";
    out.warnings.push_back(msg.str());
  }
  if (powers_look_constant(dataset.lifted))
    out.warnings.push_back(
        "segment covariances are identical across segments; source powers must vary "
        "over the recording for the dictionary to be identifiable");

  DictLearnResult dl;
  if (search) {
    AtomProjection project;
    if (rank1_atoms) {
      const VechWeighting w = dataset.weighting;
      project = [w](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        const Rank1 r = rank1_extract(v, w);
        return r.degenerate ? v : lift_outer(r.a, w);
      };
    }
    dl = learn_dictionary_search(dataset.lifted, cfg, *search, project);
  } else {
    dl = learn_dictionary(dataset.lifted, cfg);
  }
  for (auto& w : dl.warnings) out.warnings.push_back(std::move(w));
  out.objective_trace = std::move(dl.objective);
  out.converged = dl.converged;
  out.lifted = std::move(dl.dictionary);

  out.a_hat.resize(dataset.channels, sources);
  out.rank1_residuals.resize(sources);
  for (Index j = 0; j < sources; ++j) {
    const Rank1 r = rank1_extract(out.lifted.col(j), dataset.weighting);
    out.a_hat.col(j) = r.a;
    out.rank1_residuals(j) = r.residual;
    if (r.degenerate) out.degenerate_columns.push_back(j);
    if (r.tied) out.tied_columns.push_back(j);
  }
  return out;
}

SubspaceBasis fit_subspace(const CovarianceDataset& dataset, Index sources) {
  const Eigen::MatrixXd& x = dataset.lifted;
  if (sources < 1) fail(ErrorCode::invalid_argument, "subspace dimension must be >= 1");
  if (sources > x.rows()) {
    std::ostringstream msg;
    msg << "subspace dimension " << sources << " exceeds the lifted dimension " << x.rows();
    fail(ErrorCode::rank_deficient, msg.str());
  }
  if (x.cols() < sources) {
    std::ostringstream msg;
    msg << "only " << x.cols() << " segments for a " << sources
        << "-dimensional subspace; use a smaller N or more data (longer recording or "
           "more overlap)";
    fail(ErrorCode::rank_deficient, msg.str());
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU);
  SubspaceBasis out;
  out.u = svd.matrixU().leftCols(sources);
  out.singular_values = svd.singularValues();
  const double total = out.singular_values.squaredNorm();
  out.explained_energy =
      total > 0.0 ? out.singular_values.head(sources).squaredNorm() / total : 0.0;
  return out;
}

ProjectorValue projector_objective(const Eigen::MatrixXd& a, const Eigen::MatrixXd& u,
                                   VechWeighting weighting) {
  const Index n = a.cols();
  const Index dim = lifted_dim(a.rows());
  if (u.rows() != dim)
    fail(ErrorCode::dimension, "subspace basis rows do not match M(M+1)/2");
  if (n < 1) fail(ErrorCode::dimension, "mixing matrix has no columns");
  if (has_zero_column(a)) fail(ErrorCode::invalid_argument, "mixing matrix has a zero column");

  if (n > dim) fail(ErrorCode::dimension, "projector objective needs N <= M(M+1)/2");

  // Everything goes through the thin SVD of the column-normalized lift,
  // Dn = D diag(1/|d_j|) = Q S V^T. P_D depends only on Dn, and normalizing
  // makes mean(s^2) = 1 so the regularization test and eps are scale-free.
  // With K = (Dn^T Dn + eps)^-1 the projector is Q diag(phi) Q^T,
  // phi = s^2 / (s^2 + eps).
  const Eigen::MatrixXd d = lifted_dictionary(a, weighting);
  const Eigen::VectorXd norms = d.colwise().norm().transpose();
  const Eigen::MatrixXd dn = d * norms.cwiseInverse().asDiagonal();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(dn, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::ArrayXd sv = svd.singularValues().array();
  const Eigen::ArrayXd s2 = sv.square();

  ProjectorValue out;
  double eps = 0.0;
  if (s2(n - 1) < kProjectorRegularizeBelow) {
    eps = kProjectorEpsilon;
    out.regularized = true;
  }
  const Eigen::ArrayXd phi = s2 / (s2 + eps);
  const Eigen::ArrayXd scale = sv / (s2 + eps);  // S (S^2 + eps)^-1
  const Eigen::MatrixXd& q = svd.matrixU();
  const Eigen::MatrixXd& v = svd.matrixV();

  // P_U = U E^{-1} U^T with E = U^T U (identity for an orthonormal basis).
  const Eigen::MatrixXd e = u.transpose() * u;
  const Eigen::LDLT<Eigen::MatrixXd> e_fact(e);
  const Eigen::MatrixXd qtu = q.transpose() * u;
  const Eigen::MatrixXd pu_q = u * e_fact.solve(qtu.transpose());  // P_U Q
  const Eigen::MatrixXd c = q.transpose() * pu_q;                   // Q^T P_U Q
  const Eigen::MatrixXd einv_e = e_fact.solve(e);
  const double pu_sq = (einv_e * einv_e).trace();
  out.value = phi.square().sum() - 2.0 * (phi * c.diagonal().array()).sum() + pu_sq;

  // d f / d Dn = 4 (I - P) R Dn K with R = P - P_U, and
  // (I - P) R Q = Q diag(phi (1 - phi)) + Q diag(phi) C - P_U Q.
  Eigen::MatrixXd z = q * (phi * (1.0 - phi)).matrix().asDiagonal();
  z += q * (phi.matrix().asDiagonal() * c);
  z -= pu_q;
  const Eigen::MatrixXd grad_dn = 4.0 * z * scale.matrix().asDiagonal() * v.transpose();
  // Through the normalization: d f / d d_j = (I - dn_j dn_j^T) g_j / |d_j|.
  Eigen::MatrixXd grad_d(dim, n);
  for (Index j = 0; j < n; ++j)
    grad_d.col(j) = (grad_dn.col(j) - dn.col(j) * dn.col(j).dot(grad_dn.col(j))) / norms(j);

  out.gradient.resize(a.rows(), n);
  for (Index j = 0; j < n; ++j)
    out.gradient.col(j) = pull_back_lift(grad_d.col(j), a.col(j), weighting);
  return out;
}

void Covdl2Config::validate() const {
  if (restarts < 1) fail(ErrorCode::invalid_argument, "covdl2 needs at least one restart");
  if (max_iters < 1) fail(ErrorCode::invalid_argument, "covdl2 max_iters must be >= 1");
  if (!(grad_tol > 0.0)) fail(ErrorCode::invalid_argument, "covdl2 grad_tol must be positive");
  if (memory < 0) fail(ErrorCode::invalid_argument, "L-BFGS memory must be >= 0");
}

CovDlResult covdl2(const CovarianceDataset& dataset, Index sources, const Covdl2Config& cfg) {
  cfg.validate();
  const Index m = dataset.channels;
  const Index dim = lifted_dim(m);
  if (dataset.lifted.rows() != dim)
    fail(ErrorCode::dimension, "dataset rows do not match M(M+1)/2");
  if (sources >= dim) {
    std::ostringstream msg;
    msg << "covdl2 requires N < M(M+1)/2, got N = " << sources << " with M(M+1)/2 = " << dim
        << "; use covdl1 for an overcomplete lifted dictionary";
    fail(ErrorCode::invalid_argument, msg.str());
  }
  if (cfg.initial && (cfg.initial->rows() != m || cfg.initial->cols() != sources))
    fail(ErrorCode::dimension, "covdl2 initial guess has the wrong shape");

  const SubspaceBasis basis = fit_subspace(dataset, sources);

  // Typical column scale: entries of a_i a_i^T should be comparable to the
  // per-source share of the mean channel power.
  double mean_power = 0.0;
  {
    Index k = 0;
    for (Index c = 0; c < m; ++c) {
      mean_power += dataset.lifted.row(k).mean();
      k += m - c;
    }
    mean_power /= static_cast<double>(m);
  }
  const double col_scale =
      std::sqrt(std::max(mean_power, std::numeric_limits<double>::min()) /
                static_cast<double>(sources)) /
      std::sqrt(static_cast<double>(m));

  const VechWeighting weighting = dataset.weighting;
  const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const Eigen::Map<const Eigen::MatrixXd> a(x.data(), m, sources);
    if (has_zero_column(a)) return std::numeric_limits<double>::infinity();
    const ProjectorValue pv = projector_objective(a, basis.u, weighting);
    grad = Eigen::Map<const Eigen::VectorXd>(pv.gradient.data(), pv.gradient.size());
    return pv.value;
  };
  // f is invariant to column scaling, so the gradient of column i scales like
  // 1/|a_i|; measure stationarity on the column-normalized point.
  const StationarityMeasure measure = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
    const Eigen::Map<const Eigen::MatrixXd> a(x.data(), m, sources);
    const Eigen::Map<const Eigen::MatrixXd> ga(g.data(), m, sources);
    double acc = 0.0;
    for (Index j = 0; j < sources; ++j) acc += a.col(j).squaredNorm() * ga.col(j).squaredNorm();
    return std::sqrt(acc);
  };

  MinimizeOptions opts;
  opts.max_iters = cfg.max_iters;
  opts.grad_tol = cfg.grad_tol;
  opts.memory = cfg.use_lbfgs ? cfg.memory : 0;

  std::vector<MinimizeResult> runs(static_cast<std::size_t>(cfg.restarts));
  parallel_for(runs.size(), [&](std::size_t r) {
    Eigen::MatrixXd a0;
    if (r == 0 && cfg.initial) {
      a0 = *cfg.initial;
    } else {
      std::mt19937_64 rng(derive_seed(cfg.seed, 100 + r));
      std::normal_distribution<double> gauss(0.0, col_scale);
      a0.resize(m, sources);
      for (Index j = 0; j < sources; ++j)
        for (Index i = 0; i < m; ++i) a0(i, j) = gauss(rng);
    }
    Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(a0.data(), a0.size());
    runs[r] = minimize(objective, std::move(x0), opts, measure);
  });

  CovDlResult out;
  out.mode = Mode::covdl2;
  out.explained_energy = basis.explained_energy;
  std::size_t best = 0;
  bool any_converged = false;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    out.restart_values.push_back(runs[r].value);
    any_converged = any_converged || runs[r].converged;
    if (runs[r].value < runs[best].value) best = r;
  }
  const MinimizeResult& win = runs[best];
  out.best_restart = static_cast<int>(best);
  out.objective_trace = win.trace;
  out.projector_mismatch = win.value;
  out.stationarity = win.stationarity;
  out.converged = any_converged;
  if (!any_converged) {
    std::ostringstream msg;
    msg << "no restart reached the gradient tolerance " << cfg.grad_tol
        << " (best stationarity " << win.stationarity << ")";
    out.warnings.push_back(msg.str());
  }
  out.a_hat = normalize_columns(Eigen::Map<const Eigen::MatrixXd>(win.x.data(), m, sources));
  return out;
}

PowerEstimate estimate_powers(const Eigen::MatrixXd& a, const CovarianceDataset& dataset) {
  if (lifted_dim(a.rows()) != dataset.lifted.rows())
    fail(ErrorCode::dimension, "mixing matrix channel count does not match the dataset");
  const Eigen::MatrixXd d = lifted_dictionary(a, dataset.weighting);
  PowerEstimate out;
  out.powers.resize(a.cols(), dataset.lifted.cols());
  out.residuals.resize(dataset.lifted.cols());
  parallel_for(static_cast<std::size_t>(dataset.lifted.cols()), [&](std::size_t s) {
    const auto col = static_cast<Index>(s);
    const NnlsResult r = nnls(d, dataset.lifted.col(col));
    out.powers.col(col) = r.x;
    out.residuals(col) = r.residual_norm;
  });
  return out;
}

LearnOutcome learn(const CovarianceDataset& dataset, const LearnOptions& options) {
  const Index dim = lifted_dim(dataset.channels);
  const Mode auto_mode = select_mode(dataset.channels, options.sources);
  const Mode mode = options.mode.value_or(auto_mode);
  if (mode == Mode::covdl2 && options.sources >= dim) {
    std::ostringstream msg;
    msg << "mode covdl2 was requested but N = " << options.sources
        << " >= M(M+1)/2 = " << dim
        << ": the lifted subspace cannot be undercomplete; use covdl1 or a smaller N";
    fail(ErrorCode::invalid_argument, msg.str());
  }
  LearnOutcome out;
  out.result = mode == Mode::covdl1
                   ? covdl1(dataset, options.sources, options.dictionary, options.dictionary_search,
                            options.rank1_atoms)
                   : covdl2(dataset, options.sources, options.optimizer);
  if (options.estimate_segment_powers)
    out.powers = estimate_powers(out.result.a_hat, dataset);
  return out;
}

}  // namespace covdl
