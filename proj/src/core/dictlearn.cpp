#include "dictlearn.hpp"

#include "errors.hpp"
#include "nnls.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace covdl {

using Eigen::Index;

namespace {

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& m, const std::vector<Index>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = m.col(idx[j]);
  return out;
}

Eigen::MatrixXd gather_block(const Eigen::MatrixXd& m, const std::vector<Index>& idx) {
  const auto n = static_cast<Index>(idx.size());
  Eigen::MatrixXd out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) out(i, j) = m(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  return out;
}

Eigen::VectorXd gather_entries(const Eigen::VectorXd& v, const std::vector<Index>& idx) {
  Eigen::VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out(static_cast<Index>(j)) = v(idx[j]);
  return out;
}

// `gram` (D^T D) is only used, and must be provided, when nonneg is set.
Eigen::VectorXd code_column(const Eigen::MatrixXd& d, const Eigen::MatrixXd& gram,
                            const Eigen::VectorXd& inv_norms, const Eigen::VectorXd& y, Index k,
                            bool nonneg) {
  const Index n = d.cols();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  const double ynorm = y.norm();
  if (ynorm == 0.0) return c;

  std::vector<Index> support;
  std::vector<char> blocked(static_cast<std::size_t>(n), 0);
  Eigen::VectorXd dty;
  if (nonneg) dty = d.transpose() * y;
  Eigen::VectorXd r = y;
  Eigen::VectorXd coef;
  for (Index step = 0; step < k; ++step) {
    const Eigen::VectorXd corr = (d.transpose() * r).cwiseProduct(inv_norms);
    Index best = -1;
    double best_score = 1e-12 * ynorm;
    for (Index j = 0; j < n; ++j) {
      if (blocked[static_cast<std::size_t>(j)]) continue;
      const double score = nonneg ? corr(j) : std::abs(corr(j));
      if (score > best_score) {
        best_score = score;
        best = j;
      }
    }
    if (best < 0) break;
    support.push_back(best);
    blocked[static_cast<std::size_t>(best)] = 1;

    if (nonneg) {
      coef = nnls_gram(gather_block(gram, support), gather_entries(dty, support)).x;
      std::vector<Index> kept;
      Eigen::VectorXd kept_coef(static_cast<Index>(support.size()));
      Index m = 0;
      for (std::size_t j = 0; j < support.size(); ++j) {
        if (coef(static_cast<Index>(j)) > 0.0) {
          kept.push_back(support[j]);
          kept_coef(m++) = coef(static_cast<Index>(j));
        }
      }
      support.swap(kept);
      coef = kept_coef.head(m);
      r = y - gather_columns(d, support) * coef;
    } else {
      const Eigen::MatrixXd sub = gather_columns(d, support);
      coef = sub.colPivHouseholderQr().solve(y);
      r = y - sub * coef;
    }
    if (r.norm() <= 1e-14 * ynorm) break;
  }
  for (std::size_t j = 0; j < support.size(); ++j) c(support[j]) = coef(static_cast<Index>(j));
  return c;
}

// Support taken from the k largest weights of an unrestricted NNLS fit, then
// refitted. On coherent non-negative dictionaries this finds supports greedy
// selection misses.
Eigen::VectorXd nnls_ranked_column(const Eigen::MatrixXd& d, const Eigen::MatrixXd& gram,
                                   const Eigen::VectorXd& y, Index k) {
  const Index n = d.cols();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  if (y.norm() == 0.0) return c;
  const Eigen::VectorXd dty = d.transpose() * y;
  const Eigen::VectorXd full = nnls_gram(gram, dty).x;
  std::vector<Index> order;
  for (Index j = 0; j < n; ++j)
    if (full(j) > 0.0) order.push_back(j);
  if (static_cast<Index>(order.size()) <= k) return full;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return full(a) > full(b); });
  order.resize(static_cast<std::size_t>(k));
  const Eigen::VectorXd refit = nnls_gram(gather_block(gram, order), gather_entries(dty, order)).x;
  for (std::size_t j = 0; j < order.size(); ++j) c(order[j]) = refit(static_cast<Index>(j));
  return c;
}

Eigen::VectorXd nonneg_code_column(const Eigen::MatrixXd& d, const Eigen::MatrixXd& gram,
                                   const Eigen::VectorXd& inv_norms, const Eigen::VectorXd& y,
                                   Index k) {
  Eigen::VectorXd greedy = code_column(d, gram, inv_norms, y, k, true);
  Eigen::VectorXd ranked = nnls_ranked_column(d, gram, y, k);
  return (y - d * ranked).squaredNorm() < (y - d * greedy).squaredNorm() ? ranked : greedy;
}

// Atoms whose coefficient row is identically zero are re-seeded from the data
// columns with the largest residual.
void replace_dead_atoms(const Eigen::MatrixXd& data, Eigen::MatrixXd& d,
                        const Eigen::MatrixXd& coeffs, std::vector<Index>& replaced,
                        const std::vector<char>& dead) {
  if (std::none_of(dead.begin(), dead.end(), [](char c) { return c != 0; })) return;
  Eigen::VectorXd err = (data - d * coeffs).colwise().squaredNorm().transpose();
  std::vector<Index> order(static_cast<std::size_t>(err.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return err(a) > err(b); });
  std::size_t next = 0;
  for (Index j = 0; j < d.cols(); ++j) {
    if (!dead[static_cast<std::size_t>(j)]) continue;
    while (next < order.size() && data.col(order[next]).norm() == 0.0) ++next;
    if (next < order.size()) {
      d.col(j) = data.col(order[next]) / data.col(order[next]).norm();
      ++next;
    } else {
      d.col(j).setZero();
      d(j % d.rows(), j) = 1.0;
    }
    replaced.push_back(j);
  }
}


// n distinct data columns chosen at random and normalized; zero columns (or a
// shortage of columns) fall back to Gaussian directions.
Eigen::MatrixXd initial_dictionary(const Eigen::MatrixXd& data, Index n, std::mt19937_64& rng) {
  std::vector<Index> cols(static_cast<std::size_t>(data.cols()));
  std::iota(cols.begin(), cols.end(), Index{0});
  const Index picks = std::min(n, data.cols());
  for (Index j = 0; j < picks; ++j) {
    std::uniform_int_distribution<Index> pick(j, data.cols() - 1);
    std::swap(cols[static_cast<std::size_t>(j)], cols[static_cast<std::size_t>(pick(rng))]);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd d(data.rows(), n);
  for (Index j = 0; j < n; ++j) {
    Eigen::VectorXd atom;
    if (j < picks) atom = data.col(cols[static_cast<std::size_t>(j)]);
    if (atom.size() == 0 || atom.norm() == 0.0) {
      atom.resize(data.rows());
      for (Index i = 0; i < data.rows(); ++i) atom(i) = gauss(rng);
    }
    d.col(j) = atom / atom.norm();
  }
  return d;
}

Eigen::VectorXd projected_atom(const Eigen::VectorXd& v, const AtomProjection& projection) {
  Eigen::VectorXd p = projection ? projection(v) : v;
  double norm = p.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    p = v;
    norm = p.norm();
  }
  return norm > 0.0 ? Eigen::VectorXd(p / norm) : p;
}

Eigen::MatrixXd without_column(const Eigen::MatrixXd& m, Index skip) {
  Eigen::MatrixXd out(m.rows(), m.cols() - 1);
  for (Index j = 0, q = 0; j < m.cols(); ++j)
    if (j != skip) out.col(q++) = m.col(j);
  return out;
}

// Objective relative to ||data||_F^2 below which a start counts as an exact fit.
constexpr double kExactFitRelative = 1e-14;

struct SearchState {
  Eigen::MatrixXd d, c;
  double objective = 0.0;
};

SearchState search_start(const Eigen::MatrixXd& data, const DictLearnConfig& cfg,
                         const SearchConfig& search, const AtomProjection& projection,
                         std::uint64_t seed, std::vector<double>& trace, int& iterations,
                         bool& converged) {
  const Index n = cfg.n_atoms;
  const Index k = cfg.sparsity_k;
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd d = initial_dictionary(data, n, rng);
  for (Index j = 0; j < n; ++j) d.col(j) = projected_atom(d.col(j), projection);
  Eigen::MatrixXd c = sparse_code(d, data, k, cfg.nonneg);
  Eigen::MatrixXd res = data - d * c;

  SearchState best{d, c, res.squaredNorm()};
  trace.assign(1, best.objective);
  const double floor = kExactFitRelative * data.squaredNorm();
  double mark = best.objective;  // best objective at the last progress point
  int since = 0, failed_swaps = 0;
  converged = false;
  iterations = 0;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    iterations = it;
    if (best.objective <= floor) {
      converged = true;
      break;
    }
    DictUpdate up = dict_update(d, data, c, cfg.update_rule, cfg.nonneg);
    d = std::move(up.dictionary);
    for (Index j = 0; j < n; ++j) d.col(j) = projected_atom(d.col(j), projection);
    c = sparse_code(d, data, k, cfg.nonneg);
    res = data - d * c;
    const double obj = res.squaredNorm();
    if (obj < best.objective) best = {d, c, obj};
    trace.push_back(best.objective);

    if (best.objective < mark * (1.0 - cfg.tol)) {
      mark = best.objective;
      since = 0;
      failed_swaps = 0;
    } else {
      ++since;
    }

    Eigen::VectorXd err = res.colwise().squaredNorm().transpose();
    const Eigen::VectorXd usage = c.cwiseAbs2().rowwise().sum();
    Eigen::MatrixXd overlap = (d.transpose() * d).cwiseAbs();
    bool replaced = false;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) {
        if (overlap(i, j) <= search.duplicate_corr) continue;
        const Index victim = usage(i) < usage(j) ? i : j;
        Index worst = 0;
        err.maxCoeff(&worst);
        d.col(victim) = projected_atom(res.col(worst), projection);
        err(worst) = 0.0;
        overlap.row(victim).setZero();
        overlap.col(victim).setZero();
        replaced = true;
      }
    if (replaced) {
      c = sparse_code(d, data, k, cfg.nonneg);
      continue;
    }

    if (search.stall_iters <= 0 || since < search.stall_iters) continue;
    if (++failed_swaps > search.patience) {
      converged = true;
      break;
    }
    since = 0;

    // Swap: removal cost of each atom, recoding only the columns that use it.
    d = best.d;
    c = best.c;
    std::vector<std::pair<double, Index>> cost;
    for (Index i = 0; i < n; ++i) {
      std::vector<Index> used;
      for (Index s = 0; s < data.cols(); ++s)
        if (c(i, s) != 0.0) used.push_back(s);
      double delta = 0.0;
      if (!used.empty()) {
        const Eigen::MatrixXd ys = gather_columns(data, used);
        const Eigen::MatrixXd dr = without_column(d, i);
        delta = (ys - dr * sparse_code(dr, ys, k, cfg.nonneg)).squaredNorm() -
                (ys - d * gather_columns(c, used)).squaredNorm();
      }
      cost.emplace_back(delta, i);
    }
    std::sort(cost.begin(), cost.end());
    std::uniform_int_distribution<int> pick_atom(0, std::min<int>(search.swap_atoms, static_cast<int>(n)) - 1);
    const Index victim = cost[static_cast<std::size_t>(pick_atom(rng))].second;
    const Eigen::MatrixXd dr = without_column(d, victim);
    const Eigen::MatrixXd r = data - dr * sparse_code(dr, data, k, cfg.nonneg);
    const Eigen::VectorXd e = r.colwise().squaredNorm().transpose();
    std::vector<Index> order(static_cast<std::size_t>(e.size()));
    std::iota(order.begin(), order.end(), Index{0});
    const auto top = static_cast<std::ptrdiff_t>(std::min<Index>(search.swap_columns, e.size()));
    std::partial_sort(order.begin(), order.begin() + top, order.end(),
                      [&](Index a, Index b) { return e(a) > e(b); });
    std::uniform_int_distribution<std::ptrdiff_t> pick_col(0, top - 1);
    d.col(victim) = projected_atom(r.col(order[static_cast<std::size_t>(pick_col(rng))]), projection);
    c = sparse_code(d, data, k, cfg.nonneg);
  }
  return best;
}

}  // namespace

void DictLearnConfig::validate(Index data_rows) const {
  auto bad = [](const std::string& what) { fail(ErrorCode::invalid_argument, what); };
  if (n_atoms < 1) bad("dictionary learning needs n_atoms >= 1");
  if (sparsity_k < 1) bad("sparsity_k must be >= 1");
  if (sparsity_k >= data_rows) {
    std::ostringstream msg;
    msg << "sparsity_k = " << sparsity_k << " must be smaller than the data dimension "
        << data_rows;
    bad(msg.str());
  }
  if (!(tol > 0.0)) bad("tolerance must be positive");
  if (max_iters < 1) bad("max_iters must be >= 1");
}

Eigen::MatrixXd sparse_code(const Eigen::MatrixXd& dictionary, const Eigen::MatrixXd& data,
                            Index sparsity_k, bool nonneg) {
  if (dictionary.rows() != data.rows())
    fail(ErrorCode::dimension, "sparse_code: dictionary and data row counts differ");
  if (sparsity_k < 1) fail(ErrorCode::invalid_argument, "sparse_code: sparsity_k must be >= 1");
  Eigen::VectorXd inv_norms(dictionary.cols());
  for (Index j = 0; j < dictionary.cols(); ++j) {
    const double n = dictionary.col(j).norm();
    if (!(n > 0.0)) {
      std::ostringstream msg;
      msg << "sparse_code: atom " << j << " has zero norm";
      fail(ErrorCode::invalid_argument, msg.str());
    }
    inv_norms(j) = 1.0 / n;
  }
  Eigen::MatrixXd gram;
  if (nonneg) gram = dictionary.transpose() * dictionary;
  Eigen::MatrixXd codes(dictionary.cols(), data.cols());
  parallel_for(static_cast<std::size_t>(data.cols()), [&](std::size_t s) {
    const auto col = static_cast<Index>(s);
    codes.col(col) = nonneg ? nonneg_code_column(dictionary, gram, inv_norms, data.col(col), sparsity_k)
                            : code_column(dictionary, gram, inv_norms, data.col(col), sparsity_k, false);
  });
  return codes;
}

double representation_error(const Eigen::MatrixXd& data, const Eigen::MatrixXd& dictionary,
                            const Eigen::MatrixXd& coeffs) {
  return (data - dictionary * coeffs).squaredNorm();
}

DictUpdate dict_update(const Eigen::MatrixXd& dictionary, const Eigen::MatrixXd& data,
                       const Eigen::MatrixXd& coeffs, UpdateRule rule, bool nonneg) {
  const Index n = dictionary.cols();
  if (dictionary.rows() != data.rows() || coeffs.rows() != n || coeffs.cols() != data.cols())
    fail(ErrorCode::dimension, "dict_update: inconsistent dictionary, data and coefficient shapes");

  DictUpdate out;
  out.coeffs = coeffs;
  std::vector<char> dead(static_cast<std::size_t>(n), 0);
  for (Index j = 0; j < n; ++j) dead[static_cast<std::size_t>(j)] = coeffs.row(j).isZero(0.0);

  if (rule == UpdateRule::mod) {
    Eigen::MatrixXd gram = coeffs * coeffs.transpose();
    const double tr = gram.trace();
    const double eps = 1e-8 * (tr > 0.0 ? tr / static_cast<double>(n) : 1.0);
    gram.diagonal().array() += eps;
    const Eigen::MatrixXd rhs = coeffs * data.transpose();
    out.dictionary = gram.ldlt().solve(rhs).transpose();
  } else {
    out.dictionary = dictionary;
    Eigen::MatrixXd resid = data - dictionary * coeffs;
    for (Index j = 0; j < n; ++j) {
      if (dead[static_cast<std::size_t>(j)]) continue;
      std::vector<Index> used;
      for (Index s = 0; s < coeffs.cols(); ++s)
        if (out.coeffs(j, s) != 0.0) used.push_back(s);
      Eigen::MatrixXd err(data.rows(), static_cast<Index>(used.size()));
      Eigen::RowVectorXd old_c(static_cast<Index>(used.size()));
      for (std::size_t u = 0; u < used.size(); ++u) {
        const auto uc = static_cast<Index>(u);
        old_c(uc) = out.coeffs(j, used[u]);
        err.col(uc) = resid.col(used[u]) + out.dictionary.col(j) * old_c(uc);
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(err, Eigen::ComputeThinU | Eigen::ComputeThinV);
      Eigen::VectorXd atom = svd.matrixU().col(0);
      Eigen::RowVectorXd c = svd.singularValues()(0) * svd.matrixV().col(0).transpose();
      if (c.sum() < 0.0) {
        atom = -atom;
        c = -c;
      }
      if (nonneg) c = (atom.transpose() * err).cwiseMax(0.0);
      const double before = (err - out.dictionary.col(j) * old_c).squaredNorm();
      const double after = (err - atom * c).squaredNorm();
      if (after > before) continue;
      out.dictionary.col(j) = atom;
      for (std::size_t u = 0; u < used.size(); ++u) {
        const auto uc = static_cast<Index>(u);
        out.coeffs(j, used[u]) = c(uc);
        resid.col(used[u]) = err.col(uc) - atom * c(uc);
      }
      if (c.isZero(0.0)) dead[static_cast<std::size_t>(j)] = 1;
    }
  }

  for (Index j = 0; j < n; ++j) {
    if (dead[static_cast<std::size_t>(j)]) continue;
    const double norm = out.dictionary.col(j).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      dead[static_cast<std::size_t>(j)] = 1;
      out.coeffs.row(j).setZero();
      continue;
    }
    out.dictionary.col(j) /= norm;
    out.coeffs.row(j) *= norm;
  }
  for (Index j = 0; j < n; ++j)
    if (dead[static_cast<std::size_t>(j)]) out.dictionary.col(j).setZero();
  replace_dead_atoms(data, out.dictionary, out.coeffs, out.replaced, dead);
  return out;
}

DictLearnResult learn_dictionary(const Eigen::MatrixXd& data, const DictLearnConfig& cfg) {
  cfg.validate(data.rows());
  const Index n = cfg.n_atoms;
  DictLearnResult out;
  if (data.cols() < n) {
    std::ostringstream msg;
    msg << "only " << data.cols() << " data columns for " << n
        << " atoms; the dictionary is unlikely to be identifiable";
    out.warnings.push_back(msg.str());
  }

  std::mt19937_64 rng(cfg.seed);
  Eigen::MatrixXd d = initial_dictionary(data, n, rng);

  Eigen::MatrixXd c = sparse_code(d, data, cfg.sparsity_k, cfg.nonneg);
  double obj = representation_error(data, d, c);
  out.objective.push_back(obj);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    DictUpdate up = dict_update(d, data, c, cfg.update_rule, cfg.nonneg);
    double obj_dict = representation_error(data, up.dictionary, up.coeffs);
    if (obj_dict <= obj) {
      d = std::move(up.dictionary);
      c = std::move(up.coeffs);
    } else {
      obj_dict = obj;
    }
    // The objective separates over columns, so keeping whichever code is
    // better per column never increases it.
    const Eigen::MatrixXd fresh = sparse_code(d, data, cfg.sparsity_k, cfg.nonneg);
    const Eigen::RowVectorXd err_old = (data - d * c).colwise().squaredNorm();
    const Eigen::RowVectorXd err_new = (data - d * fresh).colwise().squaredNorm();
    for (Index s = 0; s < data.cols(); ++s)
      if (err_new(s) <= err_old(s)) c.col(s) = fresh.col(s);
    const double obj_new = std::min(obj_dict, representation_error(data, d, c));
    out.objective.push_back(obj_new);
    out.iterations = it;
    const double rel = obj > 0.0 ? (obj - obj_new) / obj : 0.0;
    obj = obj_new;
    if (rel < cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.dictionary = std::move(d);
  out.coeffs = std::move(c);
  return out;
}

void SearchConfig::validate() const {
  if (restarts < 1) fail(ErrorCode::invalid_argument, "dictionary search needs at least one restart");
  if (stall_iters < 0 || patience < 0)
    fail(ErrorCode::invalid_argument, "stall_iters and patience must be >= 0");
  if (!(duplicate_corr > 0.0 && duplicate_corr <= 1.0))
    fail(ErrorCode::invalid_argument, "duplicate_corr must lie in (0, 1]");
  if (swap_atoms < 1 || swap_columns < 1)
    fail(ErrorCode::invalid_argument, "swap_atoms and swap_columns must be >= 1");
}

DictLearnResult learn_dictionary_search(const Eigen::MatrixXd& data, const DictLearnConfig& cfg,
                                        const SearchConfig& search,
                                        const AtomProjection& projection) {
  cfg.validate(data.rows());
  search.validate();
  DictLearnResult out;
  if (data.cols() < cfg.n_atoms) {
    std::ostringstream msg;
    msg << "only " << data.cols() << " data columns for " << cfg.n_atoms
        << " atoms; the dictionary is unlikely to be identifiable";
    out.warnings.push_back(msg.str());
  }
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < search.restarts; ++r) {
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
    const std::uint64_t seed = cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r);
    SearchState s = search_start(data, cfg, search, projection, seed, trace, iterations, converged);
    if (s.objective < best) {
      best = s.objective;
      out.dictionary = std::move(s.d);
      out.coeffs = std::move(s.c);
      out.objective = std::move(trace);
      out.iterations = iterations;
      out.converged = converged;
    }
    if (best <= kExactFitRelative * data.squaredNorm()) break;
  }
  return out;
}

}  // namespace covdl
