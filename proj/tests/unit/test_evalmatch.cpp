#include <doctest.h>

#include "errors.hpp"
#include "evalmatch.hpp"
#include "hungarian.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <numeric>
#include <set>

using namespace covdl;
using Eigen::Index;

namespace {

// Exhaustive maximum-weight matching for rows <= cols.
double brute_best(const Eigen::MatrixXd& w) {
  const bool flip = w.rows() > w.cols();
  const Eigen::MatrixXd m = flip ? Eigen::MatrixXd(w.transpose()) : w;
  std::vector<Index> perm(static_cast<std::size_t>(m.cols()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = -1.0;
  do {
    double s = 0.0;
    for (Index i = 0; i < m.rows(); ++i) s += m(i, perm[static_cast<std::size_t>(i)]);
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double pair_weight(const Eigen::MatrixXd& w, const std::vector<std::pair<Index, Index>>& p) {
  double s = 0.0;
  for (const auto& [r, c] : p) s += w(r, c);
  return s;
}

double greedy_weight(const Eigen::MatrixXd& w) {
  std::vector<char> used(static_cast<std::size_t>(w.cols()), 0);
  double s = 0.0;
  for (Index i = 0; i < w.rows(); ++i) {
    Index best = -1;
    for (Index j = 0; j < w.cols(); ++j)
      if (!used[static_cast<std::size_t>(j)] && (best < 0 || w(i, j) > w(i, best))) best = j;
    if (best < 0) break;
    used[static_cast<std::size_t>(best)] = 1;
    s += w(i, best);
  }
  return s;
}

}  // namespace

TEST_CASE("correlation_matrix") {
  std::mt19937_64 rng(61);
  const Eigen::MatrixXd a = testutil::gaussian(5, 4, rng);
  const Eigen::MatrixXd self = correlation_matrix(a, a);
  for (Index i = 0; i < 4; ++i) CHECK(self(i, i) == doctest::Approx(1.0));

  // Negated and permuted copy.
  Eigen::MatrixXd b(5, 4);
  b << -a.col(2), -a.col(0), -a.col(3), -a.col(1);
  const Eigen::MatrixXd p = correlation_matrix(a, b);
  CHECK(p(2, 0) == doctest::Approx(1.0));
  CHECK(p(0, 1) == doctest::Approx(1.0));
  CHECK(p(3, 2) == doctest::Approx(1.0));
  CHECK(p(1, 3) == doctest::Approx(1.0));
  CHECK((p.array() <= 1.0).all());

  const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(3, 2);
  const Eigen::MatrixXd o = correlation_matrix(e.col(0), e.col(1));
  CHECK(o(0, 0) == 0.0);

  Eigen::MatrixXd z = a;
  z.col(1).setZero();
  const Eigen::MatrixXd zc = correlation_matrix(a, z);
  CHECK(zc.col(1).isZero());

  CHECK_THROWS_AS(correlation_matrix(a, testutil::gaussian(4, 4, rng)), Error);
}

TEST_CASE("assignment examples") {
  const auto id = match_columns(Eigen::MatrixXd::Identity(4, 4));
  REQUIRE(id.size() == 4);
  double total = 0.0;
  for (const auto& p : id) {
    CHECK(p.true_index == p.est_index);
    total += p.correlation;
  }
  CHECK(total == 4.0);

  // Brute force over both assignments: 0.8 + 0.85 beats 0.9 + 0.1.
  Eigen::Matrix2d c;
  c << 0.9, 0.8,
       0.85, 0.1;
  const auto m = match_columns(c);
  REQUIRE(m.size() == 2);
  CHECK(m[0].est_index == 1);
  CHECK(m[1].est_index == 0);
  CHECK(m[0].correlation + m[1].correlation == doctest::Approx(1.65));
  CHECK(greedy_weight(c) == doctest::Approx(1.0));
}

TEST_CASE("assignment matches exhaustive search on random instances") {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int rep = 0; rep < 300; ++rep) {
    const Index r = dim(rng), c = dim(rng);
    Eigen::MatrixXd w(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) w(i, j) = u(rng);
    if (rep % 5 == 0) w = (w * 4.0).array().round() / 4.0;  // ties
    const auto pairs = max_weight_assignment(w);
    CHECK(pairs.size() == static_cast<std::size_t>(std::min(r, c)));
    std::set<Index> rows, cols;
    for (const auto& [a, b] : pairs) {
      rows.insert(a);
      cols.insert(b);
    }
    CHECK(rows.size() == pairs.size());
    CHECK(cols.size() == pairs.size());
    CHECK(pair_weight(w, pairs) == doctest::Approx(brute_best(w)).epsilon(1e-12));
    CHECK(pair_weight(w, pairs) >= greedy_weight(w) - 1e-12);
  }
}

TEST_CASE("assignment on empty input") {
  CHECK(max_weight_assignment(Eigen::MatrixXd(0, 3)).empty());
}

TEST_CASE("report ratios") {
  std::mt19937_64 rng(63);
  const Eigen::MatrixXd a = testutil::gaussian(32, 32, rng);
  const auto perfect = report(a, a);
  CHECK(perfect.recovery_ratio == 1.0);
  CHECK(perfect.recovered == 32);

  // Replace one column with something orthogonal to all of it.
  Eigen::MatrixXd est = a;
  Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr(a.leftCols(31));
  est.col(31) = qr.matrixQ().col(31);
  const auto r = report(a, est);
  CHECK(r.recovered == 31);
  CHECK(r.recovery_ratio == doctest::Approx(0.96875));

  const auto empty = report(a, Eigen::MatrixXd::Zero(32, 32));
  CHECK(empty.recovery_ratio == 0.0);
  for (double v : empty.sorted_correlations) CHECK(v == 0.0);

  CHECK_THROWS_AS(report(a, a, 0.0), Error);
  CHECK_THROWS_AS(report(a, a, 1.5), Error);
  CHECK_NOTHROW(report(a, a, 1.0));
}

TEST_CASE("report is invariant to sign, permutation and scale") {
  std::mt19937_64 rng(64);
  std::uniform_real_distribution<double> mag(0.1, 10.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::MatrixXd a = testutil::gaussian(6, 9, rng);
    std::vector<Index> perm(9);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd b(6, 9);
    for (Index j = 0; j < 9; ++j) b.col(j) = (rep % 2 ? -1.0 : 1.0) * mag(rng) * a.col(perm[j]);
    CHECK(report(a, b).recovery_ratio == 1.0);
  }
}

TEST_CASE("recovery ratio is non-increasing in the threshold") {
  std::mt19937_64 rng(65);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd a = testutil::gaussian(4, 6, rng);
    const Eigen::MatrixXd b = a + 0.3 * testutil::gaussian(4, 6, rng);
    double prev = 1.0;
    for (double t = 0.05; t <= 1.0; t += 0.05) {
      const double r = report(a, b, t).recovery_ratio;
      CHECK(r <= prev);
      prev = r;
    }
  }
}

TEST_CASE("report serialization") {
  std::mt19937_64 rng(66);
  const Eigen::MatrixXd a = testutil::gaussian(4, 5, rng);
  const Eigen::MatrixXd b = testutil::gaussian(4, 3, rng);
  const auto r = report(a, b);
  CHECK(r.n_true == 5);
  CHECK(r.n_est == 3);
  CHECK(r.matched_pairs.size() == 3);
  CHECK(std::is_sorted(r.sorted_correlations.rbegin(), r.sorted_correlations.rend()));

  const std::string csv = r.to_csv();
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  CHECK(lines == 1 + 3);
  CHECK(csv.rfind("rank,true_index,est_index,abs_correlation\n", 0) == 0);

  const std::string text = r.to_text();
  CHECK(text.find("recovery_ratio = ") != std::string::npos);
  CHECK(text.find("n_true = 5\n") != std::string::npos);
  CHECK(text.find("pair.2 = ") != std::string::npos);
  CHECK(report(a, b).to_text() == text);
}
