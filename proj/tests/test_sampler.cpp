#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "overlap_lab/errors.hpp"
#include "overlap_lab/estimation.hpp"
#include "overlap_lab/rng.hpp"
#include "overlap_lab/sampler.hpp"

using namespace overlap_lab;

namespace {

DiscreteMeasure single_atom() {
  return explicit_measure({{1.0}}, {1.0}, OverlapGrid::on_sphere({1.0}));
}

DiscreteMeasure two_orthogonal(double w0) {
  const double r = std::sqrt(0.7);
  return explicit_measure({{r, 0.0}, {0.0, r}}, {w0, 1.0 - w0}, OverlapGrid::on_sphere({0.0, 0.7}));
}

// Atoms with Gram [[.7,.3,.3],[.3,.7,.3],[.3,.3,.7]] (Cholesky rows).
DiscreteMeasure three_equal(std::vector<double> w = {1.0 / 3, 1.0 / 3, 1.0 / 3}) {
  const double a = std::sqrt(0.7);
  const double b = 0.3 / a;
  const double c = std::sqrt(0.7 - b * b);
  const double d = (0.3 - b * b) / c;
  const double e = std::sqrt(0.7 - b * b - d * d);
  return explicit_measure({{a, 0, 0}, {b, c, 0}, {b, d, e}}, std::move(w),
                          OverlapGrid::on_sphere({0.3, 0.7}));
}

Model tree_model(std::vector<double> q, std::vector<double> z, int b, std::uint64_t seed) {
  TreeMeasureSpec s;
  s.grid = OverlapGrid::on_sphere(std::move(q));
  s.zetas = std::move(z);
  s.branching = b;
  s.seed = seed;
  return Model::tree(s);
}

// Exact law of the level pattern of n replicas, by nested loops over atoms.
std::map<std::vector<Level>, double> brute_law(const DiscreteMeasure& m, int n, Level ceiling) {
  std::map<std::vector<Level>, double> law;
  const std::size_t k = m.size();
  std::vector<std::size_t> idx(n, 0);
  double mass = 0.0;
  while (true) {
    double p = 1.0;
    for (auto i : idx) p *= m.weights()[i];
    std::vector<Level> key;
    Level top = 0;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        const Level l = m.pair_level(idx[a], idx[b]);
        key.push_back(l);
        top = std::max(top, l);
      }
    if (top <= ceiling) {
      law[key] += p;
      mass += p;
    }
    int pos = n - 1;
    while (pos >= 0 && ++idx[pos] == k) idx[pos--] = 0;
    if (pos < 0) break;
  }
  for (auto& [_, p] : law) p /= mass;
  return law;
}

std::vector<Level> key_of(const LevelMatrix& m) {
  std::vector<Level> key;
  for (int a = 0; a < m.n(); ++a)
    for (int b = a + 1; b < m.n(); ++b) key.push_back(m.at(a, b));
  return key;
}

}  // namespace

TEST(Seeds, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, {0}), derive_seed(1, {1}));
  EXPECT_NE(derive_seed(1, {0, 1}), derive_seed(1, {1, 0}));
  EXPECT_NE(derive_seed(1, {0}), derive_seed(2, {0}));
  EXPECT_EQ(derive_seed(7, {3, 4}), derive_seed(7, {3, 4}));
  Rng r(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(DrawReplicas, Examples) {
  const auto d = draw_replicas(single_atom(), 3, 1);
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) EXPECT_EQ(d.matrix.at(i, j), 1);

  const auto m = two_orthogonal(0.3);
  const double collision = 0.3 * 0.3 + 0.7 * 0.7;
  const int pairs = 100'000;
  int same = 0;
  for (int i = 0; i < pairs; ++i) {
    const auto r = draw_replicas(m, 2, derive_seed(11, {static_cast<std::uint64_t>(i)}));
    same += r.atom_indices[0] == r.atom_indices[1];
    EXPECT_EQ(r.atom_indices[0] == r.atom_indices[1], r.matrix.at(0, 1) == 2);
  }
  EXPECT_NEAR(static_cast<double>(same) / pairs, collision,
              3 * std::sqrt(collision * (1 - collision) / pairs));

  const auto a = draw_replicas(three_equal(), 5, 42);
  const auto b = draw_replicas(three_equal(), 5, 42);
  EXPECT_EQ(a.atom_indices, b.atom_indices);
}

TEST(EnumerateStatistic, Examples) {
  const auto top = [](const LevelView& v) { return v.at(0, 1) == v.grid().top_level() ? 1.0 : 0.0; };
  EXPECT_DOUBLE_EQ(enumerate_statistic(single_atom(), top, 2), 1.0);
  EXPECT_DOUBLE_EQ(enumerate_statistic(two_orthogonal(0.5), top, 2), 0.5);
  const auto level0 = [](const LevelView& v) { return v.at(0, 1) == 1 ? 1.0 : 0.0; };
  EXPECT_DOUBLE_EQ(enumerate_statistic(two_orthogonal(0.5), level0, 2, EventSpec::distinct(2)), 1.0);
  try {
    enumerate_statistic(single_atom(), top, 2, EventSpec::distinct(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::event_null);
  }
  TreeMeasureSpec big;
  big.grid = OverlapGrid::on_sphere({1.0});
  big.zetas = {0.5};
  big.branching = 1000;
  try {
    enumerate_statistic(build_tree_measure(big), top, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_large);
  }
}

TEST(ConditionalDraw, Examples) {
  const auto m = three_equal();
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto d = conditional_draw(m, EventSpec::distinct(3), s);
    auto idx = d.draw.atom_indices;
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_GE(d.attempts, 1u);
  }
  try {
    conditional_draw(single_atom(), EventSpec::distinct(2), 1, 1000);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::acceptance_too_low);
  }
}

TEST(ConditionalDraw, LawMatchesEnumerationFiveAtoms) {
  // Five atoms: two clusters under a common root.
  const auto c = [](double x) { return std::sqrt(x); };
  const auto m = explicit_measure({{c(0.2), c(0.3), 0, c(0.5), 0, 0, 0},
                                   {c(0.2), c(0.3), 0, 0, c(0.5), 0, 0},
                                   {c(0.2), c(0.3), 0, 0, 0, c(0.5), 0},
                                   {c(0.2), 0, c(0.8), 0, 0, 0, 0},
                                   {0, 0, 0, 0, 0, 0, 1.0}},
                                  {0.1, 0.2, 0.3, 0.25, 0.15},
                                  OverlapGrid::on_sphere({0.0, 0.2, 0.5, 1.0}));
  for (int n : {2, 3, 4}) {
    const auto law = brute_law(m, n, 3);
    std::map<std::vector<Level>, double> emp;
    const int draws = 100'000;
    for (int i = 0; i < draws; ++i) {
      const auto d = conditional_draw(m, EventSpec::distinct(n),
                                      derive_seed(n, {static_cast<std::uint64_t>(i)}));
      emp[key_of(d.draw.matrix)] += 1.0 / draws;
    }
    double tv = 0.0;
    for (const auto& [k, p] : law) tv += std::abs(p - (emp.count(k) ? emp[k] : 0.0));
    for (const auto& [k, p] : emp) tv += law.count(k) ? 0.0 : p;
    EXPECT_LE(tv / 2, 0.02) << "n=" << n;
  }
}

TEST(EstimateExpectation, Examples) {
  EstimationSettings s;
  s.mc = {50, 20};
  const Model tree = tree_model({1.0}, {0.5}, 50, 3);
  const auto one = estimate_expectation(tree, [](const LevelView&) { return 1.0; }, 2, s, 1);
  EXPECT_DOUBLE_EQ(one.estimate, 1.0);
  EXPECT_DOUBLE_EQ(one.std_error, 0.0);
  EXPECT_EQ(one.outer_samples, 50u);
  EXPECT_EQ(one.inner_samples, 50u * 20u);  // total inner tuples

  const Model single = Model::frozen(single_atom());
  const auto top = estimate_expectation(
      single, [](const LevelView& v) { return v.at(0, 1) == 1 ? 1.0 : 0.0; }, 2, s, 1);
  EXPECT_DOUBLE_EQ(top.estimate, 1.0);

  const auto m = three_equal({0.2, 0.3, 0.5});
  const auto stat = [](const LevelView& v) { return v.at(0, 1) == 1 ? 1.0 : 0.0; };
  const double exact = 1.0 - (0.04 + 0.09 + 0.25);
  EstimationSettings en;
  en.backend = Backend::enumeration;
  EXPECT_NEAR(estimate_expectation(Model::frozen(m), stat, 2, en, 0).estimate, exact, 1e-15);
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = estimate_expectation(Model::frozen(m), stat, 2, s, seed);
    inside += std::abs(r.estimate - exact) <= 3 * r.std_error;
  }
  EXPECT_GE(inside, 18);
}

TEST(EstimateExpectation, ExchangeableUnderRelabeling) {
  EstimationSettings s;
  s.mc = {200, 50};
  const Model tree = tree_model({0.4, 1.0}, {0.3, 0.7}, 20, 9);
  // f(R) = I(R12 = L2) R13 versus the same with replicas 1 and 3 swapped.
  const auto f = [](const LevelView& v) { return v.at(0, 1) == 2 ? v.value(0, 2) : 0.0; };
  const auto g = [](const LevelView& v) { return v.at(2, 1) == 2 ? v.value(2, 0) : 0.0; };
  const auto a = estimate_expectation(tree, f, 3, s, 1);
  const auto b = estimate_expectation(tree, g, 3, s, 2);
  EXPECT_LE(std::abs(a.estimate - b.estimate), 3 * std::hypot(a.std_error, b.std_error));
}

TEST(EstimateExpectation, CeilingGivesRatioAndAcceptance) {
  EstimationSettings en;
  en.backend = Backend::enumeration;
  const Ensemble e(Model::frozen(three_equal({0.2, 0.3, 0.5})), 1);
  const auto r = estimate_expectation(e, [](const LevelView&) { return 1.0; }, 2, en, 0);
  EXPECT_NEAR(*r.acceptance_rate, 1 - 0.38, 1e-15);
  EXPECT_NEAR(r.estimate, 1.0, 1e-15);
}

TEST(MomentTable, StandardErrorsAndDelta) {
  MomentTable t(2, 4, false);
  const double xs[4][2] = {{1, 2}, {2, 2}, {3, 4}, {4, 4}};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 2; ++c) t.row(r)[c] = xs[r][c];
  EXPECT_DOUBLE_EQ(t.mean(0), 2.5);
  const std::size_t c0[] = {0};
  const double one[] = {1.0};
  // sample variance of {1,2,3,4} is 5/3.
  EXPECT_NEAR(t.linear_se(c0, one), std::sqrt(5.0 / 3 / 4), 1e-14);
  const std::size_t both[] = {0, 1};
  const auto d = delta_method(t, both, [](std::span<const double> m) { return m[0] / m[1]; });
  EXPECT_NEAR(d.value, 2.5 / 3.0, 1e-12);
  // Linearized: x/3 - 2.5 y / 9.
  std::vector<double> z(4);
  for (int r = 0; r < 4; ++r) z[r] = xs[r][0] / 3.0 - 2.5 * xs[r][1] / 9.0;
  const double mz = std::accumulate(z.begin(), z.end(), 0.0) / 4;
  double v = 0.0;
  for (double x : z) v += (x - mz) * (x - mz);
  EXPECT_NEAR(d.se, std::sqrt(v / 3 / 4), 1e-8);

  MomentTable exact(1, 1, true);
  exact.row(0)[0] = 0.3;
  EXPECT_EQ(exact.linear_se(c0, one), 0.0);
}

TEST(CollectMoments, InvariantToJobCount) {
  const Model tree = tree_model({0.4, 1.0}, {0.3, 0.7}, 10, 4);
  const TupleKernel k = [](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
    out[0] = v.value(0, 1);
    out[1] = v.at(1, 2) == 1 ? 1.0 : 0.0;
  };
  std::vector<std::vector<double>> tables;
  for (int jobs : {1, 4, 8}) {
    EstimationSettings s;
    s.mc = {64, 10};
    s.jobs = jobs;
    const auto t = collect_moments(tree, 3, 2, k, s, 77);
    std::vector<double> flat;
    for (std::size_t r = 0; r < t.rows(); ++r) flat.insert(flat.end(), t.row(r).begin(), t.row(r).end());
    tables.push_back(flat);
  }
  EXPECT_EQ(tables[0], tables[1]);
  EXPECT_EQ(tables[0], tables[2]);
}

TEST(SampleEnsemble, RespectsCeilingAndFailsWhenImpossible) {
  EstimationSettings s;
  s.mc = {10, 50};
  const Model tree = tree_model({0.4, 1.0}, {0.3, 0.7}, 10, 4);
  std::size_t seen = 0;
  const auto got = sample_ensemble(tree, 4, 2, 300, s, 1, [&](const LevelView& v, auto) {
    EXPECT_LE(v.max_off_diagonal(4), 2);
    ++seen;
  });
  EXPECT_EQ(got, seen);
  EXPECT_EQ(got, 300u);
  try {
    sample_ensemble(Model::frozen(single_atom()), 2, 0, 10, s, 1, [](const LevelView&, auto) {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::acceptance_too_low);
  }
}
