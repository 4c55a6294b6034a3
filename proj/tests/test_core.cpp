#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "overlap_lab/errors.hpp"
#include "overlap_lab/level_matrix.hpp"
#include "overlap_lab/linalg.hpp"
#include "overlap_lab/ultrametric.hpp"

using namespace overlap_lab;

namespace {

std::shared_ptr<const OverlapGrid> grid_of(std::vector<double> levels, double self) {
  return std::make_shared<const OverlapGrid>(std::move(levels), std::nullopt, self);
}

LevelMatrix triple(std::shared_ptr<const OverlapGrid> g, Level l12, Level l13, Level l23) {
  return LevelMatrix(g, 3, {kDiag, l12, l13, l12, kDiag, l23, l13, l23, kDiag});
}

// Roots of det(A - x I) for a symmetric 3x3 via the trigonometric form.
std::array<double, 3> cubic_roots(const DenseMatrix& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double q = a.trace() / 3.0;
  const double p2 = std::pow(a(0, 0) - q, 2) + std::pow(a(1, 1) - q, 2) +
                    std::pow(a(2, 2) - q, 2) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  DenseMatrix b(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = (a(i, j) - (i == j ? q : 0.0)) / p;
  const double det_b = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
                       b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                       b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
  const double r = std::clamp(det_b / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double pi = std::acos(-1.0);
  std::array<double, 3> e{q + 2 * p * std::cos(phi), q + 2 * p * std::cos(phi + 2 * pi / 3), 0.0};
  e[2] = 3 * q - e[0] - e[1];
  std::sort(e.begin(), e.end());
  return e;
}

}  // namespace

TEST(OverlapGrid, ValidatesInvariants) {
  EXPECT_THROW(OverlapGrid({0.5, 0.3}, std::nullopt, 1.0), Error);
  EXPECT_THROW(OverlapGrid({}, std::nullopt, 1.0), Error);
  EXPECT_THROW(OverlapGrid({0.3, 0.7}, std::nullopt, 0.5), Error);
  try {
    OverlapGrid({0.3, 0.7}, std::vector<double>{0.5, 0.4}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_weights);
  }
  const OverlapGrid g({0.3, 0.7}, std::vector<double>{0.25, 0.75}, 1.0);
  EXPECT_EQ(g.top_level(), 2);
  EXPECT_DOUBLE_EQ(g.value(kDiag), 1.0);
  EXPECT_EQ(g.level_below(0.5), 1);
  EXPECT_EQ(g.level_below(0.3), 0);
  EXPECT_EQ(*g.find_level(0.7 + 1e-12), 2);
  EXPECT_FALSE(g.find_level(0.5).has_value());
  const auto t = g.truncated(1);
  EXPECT_EQ(t.top_level(), 1);
  EXPECT_DOUBLE_EQ(t.self_overlap(), 0.3);
  EXPECT_DOUBLE_EQ((*t.probs())[0], 1.0);
  EXPECT_EQ(grid_from_json(to_json(g)), g);
}

TEST(LevelMatrix, RejectsMalformedEntries) {
  auto g = grid_of({0.3, 0.7}, 0.7);
  EXPECT_THROW(LevelMatrix(g, 2, {kDiag, 1, 2, kDiag}), Error);   // asymmetric
  EXPECT_THROW(LevelMatrix(g, 2, {1, 1, 1, kDiag}), Error);       // diagonal
  EXPECT_THROW(LevelMatrix(g, 2, {kDiag, 3, 3, kDiag}), Error);   // off grid
  try {
    LevelMatrix(g, 2, {kDiag, 1, 2, kDiag});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_symmetric);
  }
}

TEST(Realize, SubstitutesLevelsAndSelfOverlap) {
  auto g = grid_of({0.3, 0.7}, 0.7);
  const auto d = realize(LevelMatrix(g, 2, {kDiag, 1, 1, kDiag}));
  EXPECT_DOUBLE_EQ(d(0, 0), 0.7);
  EXPECT_DOUBLE_EQ(d(0, 1), 0.3);
  EXPECT_DOUBLE_EQ(d(1, 0), 0.3);
  EXPECT_DOUBLE_EQ(d(1, 1), 0.7);

  const auto one = realize(LevelMatrix(g, 1, {kDiag}));
  EXPECT_EQ(one.n(), 1);
  EXPECT_DOUBLE_EQ(one(0, 0), 0.7);

  const auto c = realize(triple(g, 2, 2, 2));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(c(i, j), 0.7);
}

TEST(Realize, JsonRoundTripUsesDiagonalMarker) {
  auto g = grid_of({0.3, 0.7}, 0.7);
  const auto m = triple(g, 2, 1, 1);
  const auto j = to_json(m);
  EXPECT_EQ(j["entries"][0][0], "D");
  EXPECT_EQ(j["entries"][0][1], 2);
  EXPECT_EQ(level_matrix_from_json(j), m);
}

TEST(CheckUltrametric, CountsUniqueMinimum) {
  auto g = grid_of({0.3, 0.7}, 1.0);
  const auto bad = check_ultrametric(triple(g, 2, 2, 1));
  EXPECT_EQ(bad.triples_checked, 1u);
  EXPECT_EQ(bad.violations, 1u);
  ASSERT_TRUE(bad.first_witness.has_value());
  EXPECT_EQ(bad.first_witness->levels, (std::array<Level, 3>{2, 2, 1}));

  const auto good = check_ultrametric(triple(g, 2, 1, 1));
  EXPECT_EQ(good.violations, 0u);
  EXPECT_FALSE(good.first_witness.has_value());

  const auto small = check_ultrametric(LevelMatrix(g, 2, {kDiag, 1, 1, kDiag}));
  EXPECT_EQ(small.triples_checked, 0u);
}

TEST(CheckUltrametric, LevelFormAgreesWithMinimumForm) {
  auto g = grid_of({0.1, 0.4, 0.8}, 1.0);
  for (Level a = 1; a <= 3; ++a)
    for (Level b = 1; b <= 3; ++b)
      for (Level c = 1; c <= 3; ++c) {
        const auto m = triple(g, a, b, c);
        std::uint64_t level_violations = 0;
        for (Level l = 1; l <= 3; ++l) level_violations += check_ultrametric_at_level(m.view(), l).violations;
        const bool unique_min = check_ultrametric(m).violations > 0;
        EXPECT_EQ(unique_min, level_violations > 0) << a << b << c;
      }
}

TEST(CheckUltrametric, PermutationInvariant) {
  auto g = grid_of({0.0, 0.3, 0.6, 1.0}, 1.0);
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 7;
    std::uniform_int_distribution<int> lv(1, 4);
    std::vector<Level> e(n * n, kDiag);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) e[i * n + j] = e[j * n + i] = static_cast<Level>(lv(gen));
    const LevelMatrix m(g, n, e);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    const auto p = m.permuted(perm);
    EXPECT_EQ(check_ultrametric(m).violations, check_ultrametric(p).violations);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) EXPECT_EQ(p.at(i, j), p.at(j, i));
  }
}

TEST(Truncate, CapsAtSecondLevel) {
  auto g = grid_of({0.3, 0.7}, 0.7);
  const auto t = truncate(triple(g, 2, 1, 2));
  EXPECT_EQ(t.grid().top_level(), 1);
  const auto d = realize(t);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(d(i, j), 0.3);

  auto g3 = grid_of({0.0, 0.3, 0.7}, 0.7);
  const auto low = triple(g3, 1, 2, 1);
  const auto lt = truncate(low);
  EXPECT_EQ(lt.at(0, 1), 1);
  EXPECT_EQ(lt.at(0, 2), 2);
  EXPECT_DOUBLE_EQ(realize(lt)(0, 0), 0.3);

  try {
    truncate(LevelMatrix(grid_of({0.5}, 0.5), 2, {kDiag, 1, 1, kDiag}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::grid_too_small);
  }
}

TEST(Truncate, ComposesPerLevel) {
  auto g = grid_of({0.0, 0.2, 0.5, 0.9}, 0.9);
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> lv(1, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 5;
    std::vector<Level> e(n * n, kDiag);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) e[i * n + j] = e[j * n + i] = static_cast<Level>(lv(gen));
    const LevelMatrix m(g, n, e);
    EXPECT_EQ(truncate(truncate(m)), truncate_to(m, 2));
  }
}

TEST(Eigen, SmallClosedForms) {
  const auto id = symmetric_eigenvalues(DenseMatrix(2, {1, 0, 0, 1}));
  EXPECT_NEAR(id.eigenvalues[0], 1.0, 1e-14);
  EXPECT_NEAR(id.eigenvalues[1], 1.0, 1e-14);
  const auto ones = symmetric_eigenvalues(DenseMatrix(2, {1, 1, 1, 1}));
  EXPECT_NEAR(ones.eigenvalues[0], 0.0, 1e-14);
  EXPECT_NEAR(ones.eigenvalues[1], 2.0, 1e-14);
}

TEST(Eigen, MatchesCharacteristicPolynomial3x3) {
  const DenseMatrix adv(3, {1, 0.7, 0.7, 0.7, 1, 0.3, 0.7, 0.3, 1});
  const auto r = symmetric_eigenvalues(adv);
  const auto oracle = cubic_roots(adv);
  double product = 1.0;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.eigenvalues[i], oracle[i], 1e-12);
    EXPECT_GT(r.eigenvalues[i], 0.0);
    product *= r.eigenvalues[i];
  }
  EXPECT_NEAR(product, 0.224, 1e-12);  // cofactor determinant

  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    DenseMatrix a(3);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) a(i, j) = a(j, i) = u(gen);
    const auto got = symmetric_eigenvalues(a);
    const auto want = cubic_roots(a);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(got.eigenvalues[i], want[i], 1e-9);
  }
}

TEST(Eigen, RandomGramIsPsdWithTraceAndResidual) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  for (int n : {1, 2, 5, 16, 33, 64}) {
    const int d = std::max(1, n / 2);
    std::vector<double> x(static_cast<std::size_t>(n) * d);
    for (double& v : x) v = z(gen);
    DenseMatrix a(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += x[i * d + k] * x[j * d + k];
        a(i, j) = s;
      }
    DenseMatrix vecs;
    const auto r = symmetric_eigensystem(a, vecs);
    ASSERT_EQ(r.eigenvalues.size(), static_cast<std::size_t>(n));
    EXPECT_TRUE(std::is_sorted(r.eigenvalues.begin(), r.eigenvalues.end()));
    EXPECT_GE(r.eigenvalues.front(), -1e-10 * n);
    const double sum = std::accumulate(r.eigenvalues.begin(), r.eigenvalues.end(), 0.0);
    EXPECT_NEAR(sum, a.trace(), 1e-9 * n * a.max_abs());
    for (int c = 0; c < n; ++c) {
      double res = 0.0;
      for (int i = 0; i < n; ++i) {
        double av = 0.0;
        for (int j = 0; j < n; ++j) av += a(i, j) * vecs(j, c);
        res = std::max(res, std::abs(av - r.eigenvalues[c] * vecs(i, c)));
      }
      EXPECT_LE(res, 10 * 1e-12 * a.max_abs() * n);
    }
    EXPECT_TRUE(is_psd(a).psd);
  }
}

TEST(Eigen, Errors) {
  try {
    symmetric_eigenvalues(DenseMatrix(2, {1, 0.5, 0.4, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::not_symmetric);
  }
  DenseMatrix hard(6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) hard(i, j) = 1.0 / (i + j + 1);
  try {
    symmetric_eigenvalues(hard, {1e-12, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_convergence);
  }
}

TEST(IsPsd, ConstantAndNonGramPatterns) {
  auto g = grid_of({0.5}, 0.5);
  const auto c = is_psd(LevelMatrix(g, 3, {kDiag, 1, 1, 1, kDiag, 1, 1, 1, kDiag}));
  EXPECT_TRUE(c.psd);
  EXPECT_NEAR(c.min_eigenvalue, 0.0, 1e-12);

  // Brute force over 3x3 level patterns on a grid with a negative level.
  auto neg = grid_of({-0.9, 0.2, 0.9}, 1.0);
  int found = 0;
  for (Level a = 1; a <= 3; ++a)
    for (Level b = 1; b <= 3; ++b)
      for (Level cc = 1; cc <= 3; ++cc) {
        const auto m = triple(neg, a, b, cc);
        const auto r = is_psd(m);
        const auto oracle = cubic_roots(realize(m));
        EXPECT_EQ(r.psd, oracle[0] >= -1e-9 * 3 * 1.0);
        found += r.psd ? 0 : 1;
      }
  EXPECT_GT(found, 0);
  EXPECT_FALSE(is_psd(triple(neg, 1, 1, 1)).psd);
}
