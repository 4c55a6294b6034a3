#include "overlap_lab/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "overlap_lab/errors.hpp"
#include "overlap_lab/rng.hpp"

namespace overlap_lab {

bool TolerancePolicy::accepts_max(double residual, double se) const noexcept {
  return std::abs(residual) <= std::max(abs_tol, z * se);
}

bool TolerancePolicy::accepts_sum(double residual, double se) const noexcept {
  return std::abs(residual) <= z * se + abs_tol;
}

namespace {

// pm[m] = largest off-diagonal level among the first m replicas.
void prefix_max(const LevelView& v, std::vector<Level>& pm) {
  const int n = v.n();
  pm.assign(static_cast<std::size_t>(n) + 1, Level{0});
  for (int m = 2; m <= n; ++m) {
    Level best = pm[m - 1];
    for (int i = 0; i < m - 1; ++i) best = std::max(best, v.at(i, m - 1));
    pm[m] = best;
  }
}

void require_mass(const MomentTable& table, std::size_t col, const std::string& what) {
  if (table.mean(col) > 0.0) return;
  if (table.exact()) throw Error(Errc::event_null, what + " has zero mass");
  throw Error(Errc::acceptance_too_low, what + " was never observed");
}

EstimateReport to_report(const MomentTable& table, const DeltaEstimate& d,
                         std::optional<double> rate = std::nullopt) {
  EstimateReport r;
  r.estimate = d.value;
  r.std_error = d.se;
  r.inner_samples = table.inner_samples();
  r.outer_samples = table.rows();
  r.acceptance_rate = rate;
  return r;
}

/// Column means with the ensemble denominator: E_ens<X> = E<X I^c>/E<I^c>.
struct Indicators {
  Level event_ceiling;     // conditioning level (A_n of the ensemble)
  Level ensemble_ceiling;  // ensemble's own ceiling (top when none)
};

// On a one-level grid the distinct-replica event is impossible (ceiling 0).
Indicators indicators_for(const Ensemble& ens) {
  return {static_cast<Level>(ens.top() - 1), ens.top()};
}

}  // namespace

std::vector<ResidualReport> gg_residuals(const Ensemble& ensemble,
                                         std::span<const ObservableSpec> observables,
                                         const EstimationSettings& settings, std::uint64_t seed,
                                         const std::optional<EventSpec>& conditioned,
                                         TolerancePolicy policy) {
  if (observables.empty()) return {};
  int max_n = 0;
  for (const auto& obs : observables) {
    obs.validate(ensemble.grid());
    max_n = std::max(max_n, obs.n);
  }
  const Level ceiling =
      conditioned ? conditioned->ceiling(ensemble.grid(), ensemble.top()) : ensemble.top();
  if (ceiling < 1) {
    throw Error(Errc::acceptance_too_low, "conditioning event excludes every level");
  }
  const bool weighted = conditioned.has_value() || ensemble.ceiling().has_value();
  constexpr std::size_t kCols = 7;
  const std::size_t dim = kCols * observables.size();

  const auto table = collect_moments(
      ensemble.model(), max_n + 1, dim,
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        thread_local std::vector<Level> pm;
        prefix_max(v, pm);
        const OverlapGrid& grid = v.grid();
        for (std::size_t j = 0; j < observables.size(); ++j) {
          const auto& obs = observables[j];
          const int n = obs.n;
          const double i2 = pm[2] <= ceiling ? 1.0 : 0.0;
          const double in = pm[n] <= ceiling ? 1.0 : 0.0;
          const double in1 = pm[n + 1] <= ceiling ? 1.0 : 0.0;
          auto* o = out.data() + kCols * j;
          const double f = (in > 0.0 || in1 > 0.0) ? obs.f(v) : 0.0;
          o[0] = f * obs.psi(v.at(0, n), grid) * in1;
          o[1] = in1;
          o[2] = f * in;
          o[3] = in;
          o[4] = i2 > 0.0 ? obs.psi(v.at(0, 1), grid) : 0.0;
          o[5] = i2;
          double cross = 0.0;
          if (in > 0.0 && f != 0.0) {
            for (int l = 2; l <= n; ++l) cross += obs.psi(v.at(0, l - 1), grid);
          }
          o[6] = f * cross * in;
        }
      },
      settings, seed);

  std::vector<ResidualReport> reports;
  reports.reserve(observables.size());
  for (std::size_t j = 0; j < observables.size(); ++j) {
    const double inv_n = 1.0 / observables[j].n;
    const std::size_t base = kCols * j;
    require_mass(table, base + 1, "replica event for " + observables[j].id());
    require_mass(table, base + 3, "replica event for " + observables[j].id());
    require_mass(table, base + 5, "two-replica event");
    std::size_t cols[kCols];
    for (std::size_t c = 0; c < kCols; ++c) cols[c] = base + c;

    ResidualReport r;
    r.exact = table.exact();
    const std::optional<double> rate =
        weighted ? std::optional<double>(table.mean(base + 1)) : std::nullopt;
    r.lhs = to_report(table, delta_method(table, std::span(cols, 2),
                                          [](auto m) { return m[0] / m[1]; }),
                      rate);
    r.rhs_terms.push_back(to_report(
        table, delta_method(table, std::span(cols + 2, 4),
                            [](auto m) { return (m[0] / m[1]) * (m[2] / m[3]); })));
    const std::size_t cross_cols[] = {base + 6, base + 3};
    r.rhs_terms.push_back(to_report(
        table, delta_method(table, cross_cols, [](auto m) { return m[0] / m[1]; })));
    r.rhs_weights = {inv_n, inv_n};
    const auto res = delta_method(table, cols, [inv_n](auto m) {
      return m[0] / m[1] - inv_n * (m[2] / m[3]) * (m[4] / m[5]) - inv_n * m[6] / m[3];
    });
    r.residual = res.value;
    r.residual_se = res.se;
    r.pass = policy.accepts_max(r.residual, r.residual_se);
    reports.push_back(std::move(r));
  }
  return reports;
}

ResidualReport gg_residual(const Ensemble& ensemble, const ObservableSpec& obs,
                           const EstimationSettings& settings, std::uint64_t seed,
                           const std::optional<EventSpec>& conditioned, TolerancePolicy policy) {
  return gg_residuals(ensemble, std::span(&obs, 1), settings, seed, conditioned, policy).front();
}

MassReport distinct_mass_check(const Ensemble& ensemble, int n_max,
                               const EstimationSettings& settings, std::uint64_t seed,
                               TolerancePolicy policy) {
  if (n_max < 2) throw Error(Errc::invalid_argument, "n_max must be >= 2");
  const auto ind = indicators_for(ensemble);
  // Columns 2(m-2), 2(m-2)+1: I_{A_m} and the ensemble indicator on m replicas.
  const std::size_t dim = 2 * static_cast<std::size_t>(n_max - 1);
  const auto table = collect_moments(
      ensemble.model(), n_max, dim,
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        thread_local std::vector<Level> pm;
        prefix_max(v, pm);
        for (int m = 2; m <= n_max; ++m) {
          out[2 * (m - 2)] = pm[m] <= ind.event_ceiling ? 1.0 : 0.0;
          out[2 * (m - 2) + 1] = pm[m] <= ind.ensemble_ceiling ? 1.0 : 0.0;
        }
      },
      settings, seed);

  MassReport report;
  report.pass = true;
  const std::size_t two[] = {0, 1};
  const auto p = delta_method(table, two, [](auto m) { return 1.0 - m[0] / m[1]; });
  report.p_top = p.value;
  report.p_top_se = p.se;
  for (int m = 2; m <= n_max; ++m) {
    const std::size_t c = 2 * static_cast<std::size_t>(m - 2);
    require_mass(table, c + 1, "ensemble event");
    const std::size_t cols[] = {c, c + 1, 0, 1};
    const double power = m - 1;
    MassPoint pt;
    pt.n = m;
    const auto est = delta_method(table, std::span(cols, 2), [](auto x) { return x[0] / x[1]; });
    pt.estimate = est.value;
    pt.estimate_se = est.se;
    pt.reference = std::pow(table.mean(0) / table.mean(1), power);
    const auto res = delta_method(table, cols, [power](auto x) {
      return x[0] / x[1] - std::pow(x[2] / x[3], power);
    });
    pt.residual = res.value;
    pt.se = res.se;
    pt.pass = policy.accepts_sum(pt.residual, pt.se);
    report.pass = report.pass && pt.pass;
    report.points.push_back(pt);
  }
  return report;
}

ResidualReport lemma1_check(const Ensemble& ensemble, const FSpec& f, int n,
                            const EstimationSettings& settings, std::uint64_t seed,
                            TolerancePolicy policy) {
  if (n < 2) throw Error(Errc::invalid_argument, "lemma check needs n >= 2");
  if (f.max_replica() > n) throw Error(Errc::invalid_argument, "f reads beyond n replicas");
  const auto ind = indicators_for(ensemble);
  const auto table = collect_moments(
      ensemble.model(), n + 1, 6,
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        thread_local std::vector<Level> pm;
        prefix_max(v, pm);
        const double fv = f(v);
        out[0] = pm[n + 1] <= ind.event_ceiling ? fv : 0.0;
        out[1] = pm[n + 1] <= ind.ensemble_ceiling ? 1.0 : 0.0;
        out[2] = pm[n] <= ind.event_ceiling ? fv : 0.0;
        out[3] = pm[n] <= ind.ensemble_ceiling ? 1.0 : 0.0;
        out[4] = pm[2] <= ind.event_ceiling ? 1.0 : 0.0;
        out[5] = pm[2] <= ind.ensemble_ceiling ? 1.0 : 0.0;
      },
      settings, seed);
  for (std::size_t c : {1, 3, 5}) require_mass(table, c, "ensemble event");

  ResidualReport r;
  r.exact = table.exact();
  const std::size_t cols[] = {0, 1, 2, 3, 4, 5};
  r.lhs = to_report(table, delta_method(table, std::span(cols, 2), [](auto m) { return m[0] / m[1]; }));
  r.rhs_terms.push_back(to_report(
      table, delta_method(table, std::span(cols + 2, 4),
                          [](auto m) { return (m[2] / m[3]) * (m[0] / m[1]); })));
  r.rhs_weights = {1.0};
  const auto res = delta_method(table, cols, [](auto m) {
    return m[0] / m[1] - (m[4] / m[5]) * (m[2] / m[3]);
  });
  r.residual = res.value;
  r.residual_se = res.se;
  r.pass = policy.accepts_sum(r.residual, r.residual_se);
  return r;
}

ResidualReport consistency_check(const Ensemble& ensemble, const FSpec& f, int n,
                                 const EstimationSettings& settings, std::uint64_t seed,
                                 TolerancePolicy policy) {
  if (n < 2) throw Error(Errc::invalid_argument, "consistency check needs n >= 2");
  if (f.max_replica() > n) throw Error(Errc::invalid_argument, "f reads beyond n replicas");
  const auto ind = indicators_for(ensemble);
  const auto table = collect_moments(
      ensemble.model(), n + 1, 4,
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        thread_local std::vector<Level> pm;
        prefix_max(v, pm);
        const bool a1 = pm[n + 1] <= ind.event_ceiling;
        const bool a0 = pm[n] <= ind.event_ceiling;
        if (!a0) return;
        const double fv = f(v);
        out[0] = a1 ? fv : 0.0;
        out[1] = a1 ? 1.0 : 0.0;
        out[2] = fv;
        out[3] = 1.0;
      },
      settings, seed);
  const double one[] = {1.0};
  for (std::size_t c : {std::size_t{1}, std::size_t{3}}) {
    const std::size_t col[] = {c};
    const double mass = table.mean(c);
    const double se = table.linear_se(col, one);
    if (mass <= 0.0 || (!table.exact() && mass <= 3.0 * se)) {
      throw Error(Errc::divide_by_zero, "event mass indistinguishable from zero");
    }
  }
  ResidualReport r;
  r.exact = table.exact();
  const std::size_t cols[] = {0, 1, 2, 3};
  r.lhs = to_report(table, delta_method(table, std::span(cols, 2), [](auto m) { return m[0] / m[1]; }));
  r.rhs_terms.push_back(
      to_report(table, delta_method(table, std::span(cols + 2, 2), [](auto m) { return m[0] / m[1]; })));
  r.rhs_weights = {1.0};
  const auto res =
      delta_method(table, cols, [](auto m) { return m[0] / m[1] - m[2] / m[3]; });
  r.residual = res.value;
  r.residual_se = res.se;
  r.pass = policy.accepts_sum(r.residual, r.residual_se);
  return r;
}

MarginalReport conditional_marginal_check(const Ensemble& ensemble,
                                          const EstimationSettings& settings,
                                          std::uint64_t seed, TolerancePolicy policy) {
  if (ensemble.top() < 2) {
    throw Error(Errc::grid_too_small, "conditional marginal needs at least two levels");
  }
  const auto ind = indicators_for(ensemble);
  const Level k = ensemble.top();
  // Left: per level, I(R12 = l) I_{A_2}, then I_{A_2}.
  const auto left = collect_moments(
      ensemble.model(), 2, static_cast<std::size_t>(k),
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        const Level l = v.at(0, 1);
        if (l > ind.event_ceiling) return;
        out[l - 1] = 1.0;
        out[k - 1] = 1.0;
      },
      settings, derive_seed(seed, {1}));
  // Right: per level, I(R12 = l) I^c, then I^c (ensemble's own law).
  const auto right = collect_moments(
      ensemble.model(), 2, static_cast<std::size_t>(k) + 1,
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        const Level l = v.at(0, 1);
        if (l > ind.ensemble_ceiling) return;
        out[l - 1] = 1.0;
        out[k] = 1.0;
      },
      settings, derive_seed(seed, {2}));
  require_mass(left, k - 1, "A_2");
  require_mass(right, k, "ensemble event");

  MarginalReport report;
  report.pass = true;
  for (Level l = 1; l < k; ++l) {
    MarginalPoint pt;
    pt.level = l;
    const std::size_t lc[] = {static_cast<std::size_t>(l - 1), static_cast<std::size_t>(k - 1)};
    const auto cond = delta_method(left, lc, [](auto m) { return m[0] / m[1]; });
    const std::size_t rc[] = {static_cast<std::size_t>(l - 1), static_cast<std::size_t>(k - 1),
                              static_cast<std::size_t>(k)};
    const auto ref = delta_method(right, rc, [](auto m) {
      const double pl = m[0] / m[2];
      const double pk = m[1] / m[2];
      return pl / (1.0 - pk);
    });
    pt.conditional = cond.value;
    pt.conditional_se = cond.se;
    pt.reference = ref.value;
    pt.reference_se = ref.se;
    pt.residual = cond.value - ref.value;
    pt.se = std::hypot(cond.se, ref.se);
    pt.pass = policy.accepts_sum(pt.residual, pt.se);
    report.pass = report.pass && pt.pass;
    report.points.push_back(pt);
  }
  return report;
}

SupportReport support_check(const DiscreteMeasure& measure) {
  SupportReport r;
  const double qk = measure.grid().top();
  for (std::size_t a = 0; a < measure.size(); ++a) {
    if (measure.weights()[a] <= 1e-12) continue;
    ++r.atoms_checked;
    const double dev = std::abs(measure.atoms()[a].squared_norm() - qk);
    if (dev > r.max_deviation) {
      r.max_deviation = dev;
      r.worst_atom = a;
    }
  }
  r.pass = r.max_deviation <= kSupportTolerance;
  return r;
}

PositivityReport positivity_check(const Ensemble& ensemble, const EstimationSettings& settings,
                                  std::uint64_t seed) {
  PositivityReport r;
  r.min_overlap = std::numeric_limits<double>::infinity();
  const Level ceiling = ensemble.top();
  if (settings.backend == Backend::enumeration && ensemble.model().is_frozen()) {
    const auto& m = *ensemble.model().frozen_measure();
    for (std::size_t a = 0; a < m.size(); ++a) {
      for (std::size_t b = 0; b < m.size(); ++b) {
        const Level l = m.pair_level(a, b);
        if (l > ceiling) continue;
        ++r.pairs_checked;
        r.min_overlap = std::min(r.min_overlap, m.grid().value(l));
      }
    }
  } else {
    r.pairs_checked = sample_ensemble(
        ensemble, 2, ceiling, settings.mc.outer * settings.mc.inner, settings, seed,
        [&](const LevelView& v, std::span<const std::size_t>) {
          r.min_overlap = std::min(r.min_overlap, v.value(0, 1));
        });
  }
  r.pass = r.min_overlap >= -1e-12;
  return r;
}

}  // namespace overlap_lab
