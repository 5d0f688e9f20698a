#include <doctest.h>

#include "dictlearn.hpp"
#include "errors.hpp"
#include "nnls.hpp"
#include "parallel.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <numeric>

using namespace covdl;
using Eigen::Index;

namespace {

// Exhaustive NNLS: every support, unconstrained fit, keep the best feasible.
Eigen::VectorXd brute_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const Index n = a.cols();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
  double best_r = b.squaredNorm();
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<Index> idx;
    for (Index j = 0; j < n; ++j)
      if (mask & (1u << j)) idx.push_back(j);
    Eigen::MatrixXd sub(a.rows(), static_cast<Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) sub.col(static_cast<Index>(j)) = a.col(idx[j]);
    const Eigen::VectorXd z = sub.colPivHouseholderQr().solve(b);
    if ((z.array() < 0.0).any()) continue;
    const double r = (sub * z - b).squaredNorm();
    if (r < best_r) {
      best_r = r;
      best.setZero();
      for (std::size_t j = 0; j < idx.size(); ++j) best(idx[j]) = z(static_cast<Index>(j));
    }
  }
  return best;
}

// Low-coherence dictionary: orthonormal columns plus a small perturbation.
Eigen::MatrixXd incoherent(Index rows, Index atoms, std::mt19937_64& rng, double perturb = 0.05) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(testutil::gaussian(rows, rows, rng));
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, atoms);
  q += perturb * testutil::gaussian(rows, atoms, rng);
  return testutil::unit_columns(q);
}

Eigen::MatrixXd sparse_nonneg(Index atoms, Index cols, Index k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(atoms, cols);
  std::vector<Index> perm(static_cast<std::size_t>(atoms));
  for (Index j = 0; j < cols; ++j) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index q = 0; q < k; ++q) c(perm[static_cast<std::size_t>(q)], j) = u(rng);
  }
  return c;
}

// Best total |corr| over all atom permutations; returns the count above 0.99.
int brute_matched(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& learned) {
  const Index n = truth.cols();
  const Eigen::MatrixXd corr =
      (testutil::unit_columns(truth).transpose() * testutil::unit_columns(learned)).cwiseAbs();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = -1.0;
  int best_count = 0;
  do {
    double w = 0.0;
    int count = 0;
    for (Index i = 0; i < n; ++i) {
      const double c = corr(i, perm[static_cast<std::size_t>(i)]);
      w += c;
      count += c > 0.99 ? 1 : 0;
    }
    if (w > best) {
      best = w;
      best_count = count;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best_count;
}

Index nonzeros(const Eigen::VectorXd& v) { return (v.array() != 0.0).count(); }

}  // namespace

TEST_CASE("nnls matches exhaustive enumeration") {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 40; ++rep) {
    const Eigen::MatrixXd a = testutil::gaussian(8, 5, rng);
    const Eigen::VectorXd b = testutil::gaussian(8, 1, rng);
    const auto r = nnls(a, b);
    CHECK(r.converged);
    CHECK((r.x.array() >= 0.0).all());
    const Eigen::VectorXd oracle = brute_nnls(a, b);
    CHECK((r.x - oracle).norm() < 1e-9);
    CHECK(r.residual_norm == doctest::Approx((a * r.x - b).norm()).epsilon(1e-10));
    const auto g = nnls_gram(a.transpose() * a, a.transpose() * b);
    CHECK((g.x - oracle).norm() < 1e-8);
  }
}

TEST_CASE("nnls recovers an exact nonnegative solution") {
  std::mt19937_64 rng(22);
  const Eigen::MatrixXd a = testutil::gaussian(10, 4, rng);
  const Eigen::Vector4d x(0.0, 1.5, 0.0, 2.0);
  const auto r = nnls(a, a * x);
  CHECK((r.x - x).norm() < 1e-10);
  CHECK(nnls(a, Eigen::VectorXd::Zero(10)).x.isZero());
  CHECK_THROWS_AS(nnls(a, Eigen::VectorXd::Zero(9)), Error);
}

TEST_CASE("sparse_code finds a scaled atom exactly") {
  std::mt19937_64 rng(23);
  const Eigen::MatrixXd d = testutil::unit_columns(testutil::gaussian(6, 8, rng));
  for (bool nonneg : {false, true}) {
    const Eigen::MatrixXd c = sparse_code(d, 3.0 * d.col(5), 2, nonneg);
    CHECK(nonzeros(c.col(0)) == 1);
    CHECK(c(5, 0) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK((d * c - 3.0 * d.col(5)).norm() < 1e-12);
  }
}

TEST_CASE("sparse_code recovers sparse codes under low coherence") {
  std::mt19937_64 rng(24);
  const Eigen::MatrixXd d = incoherent(20, 12, rng);
  const double mu = [&] {
    double m = 0.0;
    for (Index i = 0; i < 12; ++i)
      for (Index j = i + 1; j < 12; ++j) m = std::max(m, std::abs(d.col(i).dot(d.col(j))));
    return m;
  }();
  REQUIRE(mu < 1.0 / 3.0);  // exact recovery condition for k = 2
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::uniform_int_distribution<Index> pick(0, 11);
  for (int rep = 0; rep < 30; ++rep) {
    Index i = pick(rng), j = pick(rng);
    while (j == i) j = pick(rng);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(12);
    c(i) = u(rng);
    c(j) = u(rng);
    const Eigen::VectorXd y = d * c;

    // Oracle: the unique zero-residual 2-support by enumeration.
    int zero_supports = 0;
    for (Index p = 0; p < 12; ++p)
      for (Index q = p + 1; q < 12; ++q) {
        Eigen::MatrixXd sub(20, 2);
        sub << d.col(p), d.col(q);
        const Eigen::VectorXd z = sub.colPivHouseholderQr().solve(y);
        if ((sub * z - y).norm() < 1e-10 * y.norm()) {
          ++zero_supports;
          CHECK(((p == std::min(i, j)) && (q == std::max(i, j))));
        }
      }
    CHECK(zero_supports == 1);

    for (bool nonneg : {false, true}) {
      const Eigen::VectorXd got = sparse_code(d, y, 2, nonneg).col(0);
      CHECK((got - c).norm() < 1e-10);
    }
  }
}

TEST_CASE("full support on a square invertible dictionary solves exactly") {
  std::mt19937_64 rng(25);
  const Eigen::MatrixXd d = testutil::unit_columns(testutil::gaussian(5, 5, rng));
  const Eigen::MatrixXd y = testutil::gaussian(5, 4, rng);
  const Eigen::MatrixXd c = sparse_code(d, y, 5, false);
  CHECK((d * c - y).norm() < 1e-10);
}

TEST_CASE("sparse_code contracts") {
  std::mt19937_64 rng(26);
  const Eigen::MatrixXd d = testutil::unit_columns(testutil::gaussian(10, 15, rng));
  const Eigen::MatrixXd y = testutil::gaussian(10, 40, rng).cwiseAbs();
  for (Index k = 1; k <= 4; ++k) {
    for (bool nonneg : {false, true}) {
      const Eigen::MatrixXd c = sparse_code(d, y, k, nonneg);
      for (Index j = 0; j < y.cols(); ++j) CHECK(nonzeros(c.col(j)) <= k);
      if (nonneg) CHECK((c.array() >= 0.0).all());
    }
  }
  // Greedy residual never grows as k increases.
  for (bool nonneg : {false, true}) {
    double prev = y.squaredNorm();
    for (Index k = 1; k <= 6; ++k) {
      const double r = (y - d * sparse_code(d, y, k, nonneg)).squaredNorm();
      CHECK(r <= prev * (1.0 + 1e-12));
      prev = r;
    }
  }
  Eigen::MatrixXd dz = d;
  dz.col(3).setZero();
  CHECK_THROWS_AS(sparse_code(dz, y, 2, false), Error);
  CHECK_THROWS_AS(sparse_code(d, testutil::gaussian(9, 2, rng), 2, false), Error);
}

TEST_CASE("sparse_code is independent of the thread count") {
  std::mt19937_64 rng(27);
  const Eigen::MatrixXd d = testutil::unit_columns(testutil::gaussian(10, 15, rng));
  const Eigen::MatrixXd y = testutil::gaussian(10, 100, rng);
  set_max_threads(1);
  const Eigen::MatrixXd a = sparse_code(d, y, 3, true);
  set_max_threads(3);
  const Eigen::MatrixXd b = sparse_code(d, y, 3, true);
  set_max_threads(0);
  CHECK(a == b);
}

TEST_CASE("MOD with identity coefficients returns the normalized data") {
  std::mt19937_64 rng(28);
  const Eigen::MatrixXd y = testutil::gaussian(6, 4, rng);
  const auto up = dict_update(testutil::unit_columns(testutil::gaussian(6, 4, rng)), y,
                              Eigen::MatrixXd::Identity(4, 4), UpdateRule::mod);
  CHECK((up.dictionary - testutil::unit_columns(y)).cwiseAbs().maxCoeff() < 1e-7);
  CHECK((up.dictionary * up.coeffs - y).norm() < 1e-6 * y.norm());
}

TEST_CASE("exact model data is a fixed point of both update rules") {
  std::mt19937_64 rng(29);
  const Eigen::MatrixXd d = incoherent(12, 6, rng);
  const Eigen::MatrixXd c = sparse_nonneg(6, 60, 2, rng);
  const Eigen::MatrixXd y = d * c;
  for (auto rule : {UpdateRule::mod, UpdateRule::ksvd}) {
    const auto up = dict_update(d, y, c, rule);
    CHECK((up.dictionary - d).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(up.replaced.empty());
  }
}

TEST_CASE("dictionary updates never increase the objective for fixed codes") {
  std::mt19937_64 rng(30);
  for (int rep = 0; rep < 25; ++rep) {
    const Eigen::MatrixXd y = testutil::gaussian(8, 50, rng);
    const Eigen::MatrixXd d = testutil::unit_columns(testutil::gaussian(8, 10, rng));
    for (bool nonneg : {false, true}) {
      const Eigen::MatrixXd c = sparse_code(d, y, 3, nonneg);
      const double before = representation_error(y, d, c);
      for (auto rule : {UpdateRule::mod, UpdateRule::ksvd}) {
        const auto up = dict_update(d, y, c, rule, nonneg);
        if (!up.replaced.empty()) continue;
        CHECK(representation_error(y, up.dictionary, up.coeffs) <= before * (1.0 + 1e-9));
        for (Index j = 0; j < up.dictionary.cols(); ++j)
          CHECK(std::abs(up.dictionary.col(j).norm() - 1.0) < 1e-12);
        if (nonneg) CHECK((up.coeffs.array() >= 0.0).all());
      }
    }
  }
}

TEST_CASE("dead atoms are replaced by the worst-represented column") {
  std::mt19937_64 rng(31);
  const Eigen::MatrixXd d = testutil::unit_columns(testutil::gaussian(5, 3, rng));
  Eigen::MatrixXd y = testutil::gaussian(5, 10, rng);
  y.col(7) *= 50.0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(3, 10);
  for (Index j = 0; j < 10; ++j) c(j % 2, j) = 0.1;
  for (auto rule : {UpdateRule::mod, UpdateRule::ksvd}) {
    const auto up = dict_update(d, y, c, rule);
    REQUIRE(up.replaced.size() == 1);
    CHECK(up.replaced[0] == 2);
    // The dead row is zero, so this residual is that of the live atoms alone.
    Index worst = 0;
    (y - up.dictionary * up.coeffs).colwise().squaredNorm().maxCoeff(&worst);
    CHECK(std::abs(up.dictionary.col(2).dot(y.col(worst).normalized())) == doctest::Approx(1.0));
  }
}

TEST_CASE("learn_dictionary recovers a planted nonnegative dictionary") {
  std::mt19937_64 rng(32);
  const Index atoms = 8;
  const Eigen::MatrixXd d_true = incoherent(16, atoms, rng, 0.1);
  const Eigen::MatrixXd c = sparse_nonneg(atoms, 20 * atoms, 3, rng);
  DictLearnConfig cfg;
  cfg.n_atoms = atoms;
  cfg.sparsity_k = 3;
  cfg.max_iters = 200;
  cfg.seed = 2;
  const auto r = learn_dictionary(d_true * c, cfg);
  CHECK(brute_matched(d_true, r.dictionary) >= 8 * 9 / 10);
  for (Index j = 0; j < atoms; ++j) CHECK(std::abs(r.dictionary.col(j).norm() - 1.0) < 1e-12);
}

TEST_CASE("a single atom is the dominant singular direction") {
  std::mt19937_64 rng(33);
  Eigen::MatrixXd y = testutil::gaussian(6, 80, rng);
  y.row(0) *= 6.0;
  DictLearnConfig cfg;
  cfg.n_atoms = 1;
  cfg.sparsity_k = 1;
  cfg.nonneg = false;
  cfg.max_iters = 500;
  cfg.tol = 1e-12;
  const auto r = learn_dictionary(y, cfg);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU);
  CHECK(std::abs(r.dictionary.col(0).dot(svd.matrixU().col(0))) > 1.0 - 1e-8);
}

TEST_CASE("learn_dictionary trace, determinism and warnings") {
  std::mt19937_64 rng(34);
  const Eigen::MatrixXd y = testutil::gaussian(10, 120, rng).cwiseAbs();
  DictLearnConfig cfg;
  cfg.n_atoms = 12;
  cfg.sparsity_k = 3;
  cfg.max_iters = 40;
  cfg.seed = 5;
  for (auto rule : {UpdateRule::mod, UpdateRule::ksvd}) {
    cfg.update_rule = rule;
    const auto a = learn_dictionary(y, cfg);
    for (std::size_t i = 1; i < a.objective.size(); ++i)
      CHECK(a.objective[i] <= a.objective[i - 1] + 1e-9 * a.objective[i - 1]);
    CHECK(a.warnings.empty());
    set_max_threads(1);
    const auto b = learn_dictionary(y, cfg);
    set_max_threads(0);
    CHECK(a.dictionary == b.dictionary);
    CHECK(a.coeffs == b.coeffs);
    CHECK(a.objective == b.objective);
    for (Index j = 0; j < y.cols(); ++j) CHECK(nonzeros(a.coeffs.col(j)) <= 3);
    CHECK((a.coeffs.array() >= 0.0).all());
  }
  cfg.n_atoms = 200;
  const auto few = learn_dictionary(y, cfg);
  CHECK_FALSE(few.warnings.empty());
}

TEST_CASE("DictLearnConfig validation") {
  DictLearnConfig cfg;
  cfg.n_atoms = 4;
  cfg.sparsity_k = 6;
  CHECK_THROWS_AS(cfg.validate(6), Error);
  cfg.sparsity_k = 2;
  CHECK_NOTHROW(cfg.validate(6));
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(6), Error);
  cfg.tol = 1e-6;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(6), Error);
  cfg.max_iters = 5;
  cfg.n_atoms = 0;
  CHECK_THROWS_AS(cfg.validate(6), Error);
}

TEST_CASE("search trace, determinism and sparsity") {
  std::mt19937_64 rng(35);
  const Eigen::MatrixXd y = testutil::gaussian(10, 120, rng).cwiseAbs();
  DictLearnConfig cfg;
  cfg.n_atoms = 12;
  cfg.sparsity_k = 3;
  cfg.max_iters = 60;
  cfg.seed = 6;
  SearchConfig search;
  search.restarts = 2;
  search.stall_iters = 5;
  const auto a = learn_dictionary_search(y, cfg, search);
  REQUIRE(a.objective.size() >= 2);
  for (std::size_t i = 1; i < a.objective.size(); ++i) CHECK(a.objective[i] <= a.objective[i - 1]);
  CHECK(a.objective.back() == doctest::Approx(representation_error(y, a.dictionary, a.coeffs)));
  for (Index j = 0; j < y.cols(); ++j) CHECK(nonzeros(a.coeffs.col(j)) <= 3);
  for (Index j = 0; j < cfg.n_atoms; ++j) CHECK(std::abs(a.dictionary.col(j).norm() - 1.0) < 1e-12);
  CHECK((a.coeffs.array() >= 0.0).all());

  set_max_threads(1);
  const auto b = learn_dictionary_search(y, cfg, search);
  set_max_threads(0);
  CHECK(a.dictionary == b.dictionary);
  CHECK(a.objective == b.objective);

  // The first start does not depend on the restart count.
  search.restarts = 1;
  const auto one = learn_dictionary_search(y, cfg, search);
  CHECK(a.objective.back() <= one.objective.back());
}

TEST_CASE("search stops early on an exact fit") {
  std::mt19937_64 rng(36);
  const Index atoms = 8;
  const Eigen::MatrixXd d_true = incoherent(16, atoms, rng, 0.1);
  const Eigen::MatrixXd y = d_true * sparse_nonneg(atoms, 20 * atoms, 3, rng);
  DictLearnConfig cfg;
  cfg.n_atoms = atoms;
  cfg.sparsity_k = 3;
  cfg.max_iters = 300;
  cfg.seed = 3;
  const auto r = learn_dictionary_search(y, cfg, SearchConfig{});
  CHECK(r.converged);
  CHECK(r.iterations < cfg.max_iters);
  CHECK(r.objective.back() <= 1e-14 * y.squaredNorm());
  CHECK(brute_matched(d_true, r.dictionary) == atoms);
}

TEST_CASE("search keeps atoms on the projection set") {
  std::mt19937_64 rng(37);
  const Eigen::MatrixXd y = testutil::gaussian(6, 90, rng).cwiseAbs();
  DictLearnConfig cfg;
  cfg.n_atoms = 7;
  cfg.sparsity_k = 2;
  cfg.max_iters = 40;
  SearchConfig search;
  search.restarts = 1;
  search.stall_iters = 4;
  const AtomProjection drop_last = [](const Eigen::VectorXd& v) {
    Eigen::VectorXd p = v;
    p(p.size() - 1) = 0.0;
    return p;
  };
  const auto r = learn_dictionary_search(y, cfg, search, drop_last);
  CHECK(r.dictionary.row(5).isZero(0.0));
  for (Index j = 0; j < cfg.n_atoms; ++j) CHECK(std::abs(r.dictionary.col(j).norm() - 1.0) < 1e-12);
}

TEST_CASE("SearchConfig validation") {
  CHECK_NOTHROW(SearchConfig{}.validate());
  SearchConfig s;
  s.restarts = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.patience = -1;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.duplicate_corr = 0.0;
  CHECK_THROWS_AS(s.validate(), Error);
  s.duplicate_corr = 1.5;
  CHECK_THROWS_AS(s.validate(), Error);
  s = {};
  s.swap_columns = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  std::mt19937_64 rng(38);
  DictLearnConfig cfg;
  cfg.n_atoms = 3;
  s = {};
  s.swap_atoms = 0;
  CHECK_THROWS_AS(learn_dictionary_search(testutil::gaussian(4, 10, rng), cfg, s), Error);
}
