#include "overlap_lab/induction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "overlap_lab/errors.hpp"
#include "overlap_lab/rng.hpp"
#include "overlap_lab/ultrametric.hpp"

namespace overlap_lab {

CollisionReport collision_identity_check(const DiscreteMeasure& measure, std::uint64_t pairs,
                                         std::uint64_t seed) {
  CollisionReport r;
  Rng rng(seed);
  const Level top = measure.grid().top_level();
  for (std::uint64_t i = 0; i < pairs; ++i) {
    const std::size_t a = measure.sample_atom(rng);
    const std::size_t b = measure.sample_atom(rng);
    const Level l = measure.pair_level(a, b);
    ++r.pairs_checked;
    if ((l == top) != (a == b)) {
      r.pass = false;
      r.counterexample = CollisionReport::Counterexample{std::min(a, b), std::max(a, b), l};
      break;
    }
  }
  return r;
}

bool matches(const TriplePattern& pattern, const LevelView& v) noexcept {
  const Level seen[3] = {v.at(0, 1), v.at(0, 2), v.at(1, 2)};
  for (int i = 0; i < 3; ++i) {
    if (pattern[i] != 0 && pattern[i] != seen[i]) return false;
  }
  return true;
}

namespace {

struct Plan {
  EstimationSettings settings;
  TolerancePolicy policy;
  bool exact = false;
};

using TupleVisit = std::function<void(const LevelView&)>;

// Tuples of the ensemble with every off-diagonal level <= ceiling: all
// positive-probability tuples when exact, else `count` sampled tuples.
std::uint64_t for_each_tuple(const Ensemble& ens, int n, Level ceiling, std::uint64_t count,
                             const Plan& plan, std::uint64_t seed, const TupleVisit& visit) {
  std::uint64_t seen = 0;
  if (plan.exact) {
    enumerate_tuples(*ens.model().frozen_measure(), n,
                     [&](const LevelView& v, std::span<const std::size_t>, double p) {
                       if (p <= 0.0 || v.max_off_diagonal(n) > ceiling) return;
                       ++seen;
                       visit(v);
                     });
    if (seen == 0) {
      throw Error(Errc::acceptance_too_low,
                  "no replica tuple of size " + std::to_string(n) + " stays below the ceiling");
    }
    return seen;
  }
  return sample_ensemble(ens, n, ceiling, count, plan.settings, seed,
                         [&](const LevelView& v, std::span<const std::size_t>) { visit(v); });
}

std::vector<ObservableSpec> level_observables(const DescendConfig& cfg, const OverlapGrid& grid) {
  if (cfg.observables.empty()) return default_observables(grid, {2});
  std::vector<ObservableSpec> kept;
  for (const auto& obs : cfg.observables) {
    try {
      obs.validate(grid);
      kept.push_back(obs);
    } catch (const Error&) {
    }
  }
  return kept;
}

LevelReport descend_from(const Ensemble& ens, const DescendConfig& cfg, const Plan& plan,
                         std::uint64_t seed, int depth) {
  LevelReport r;
  const Level t = ens.top();
  r.level = t;
  r.top_value = ens.grid().top();
  r.exact = plan.exact;
  r.min_truncated_eigenvalue = std::numeric_limits<double>::infinity();
  const auto stage_seed = [&](std::uint64_t stage) {
    return derive_seed(seed, {static_cast<std::uint64_t>(depth), stage});
  };

  if (depth == 0) {
    const auto measure = ens.model().draw(stage_seed(0));
    const auto c = collision_identity_check(*measure, cfg.collision_pairs, stage_seed(1));
    r.collision_identity_pass = c.pass;
    r.collision_pairs_checked = c.pairs_checked;
  }
  if (t == 1) {
    r.min_truncated_eigenvalue = 0.0;
    return r;
  }

  const Ensemble next = ens.conditioned();
  try {
    // Level-t ultrametricity; below the first step this is also the
    // transitivity of the top level, i.e. the collision identity of the
    // conditioned array.
    std::uint64_t transitivity_failures = 0;
    r.triples_checked =
        for_each_tuple(ens, 3, t, cfg.triples, plan, stage_seed(2), [&](const LevelView& v) {
          if (check_ultrametric_at_level(v, t).violations > 0) ++r.ultra_violations_at_level;
          const int at_top = (v.at(0, 1) == t) + (v.at(0, 2) == t) + (v.at(1, 2) == t);
          if (at_top == 2) ++transitivity_failures;
        });
    if (depth > 0) {
      r.collision_identity_pass = transitivity_failures == 0;
      r.collision_pairs_checked = r.triples_checked;
    }

    r.observables = level_observables(cfg, next.grid());
    r.gg = gg_residuals(ens, r.observables, plan.settings, stage_seed(3),
                        EventSpec::distinct(cfg.n_condition), plan.policy);
    r.conditioned_gg_pass =
        std::all_of(r.gg.begin(), r.gg.end(), [](const ResidualReport& g) { return g.pass; });

    const double diag = ens.grid().value(static_cast<Level>(t - 1));
    const int n = cfg.n_condition;
    r.psd_samples = for_each_tuple(
        ens, n, static_cast<Level>(t - 1), cfg.psd_samples, plan, stage_seed(4),
        [&](const LevelView& v) {
          DenseMatrix a(n);
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) a(i, j) = i == j ? diag : v.value(i, j);
          }
          const double lo = symmetric_eigenvalues(a).eigenvalues.front();
          r.min_truncated_eigenvalue = std::min(r.min_truncated_eigenvalue, lo);
        });
    r.truncated_psd_pass = r.min_truncated_eigenvalue >= -cfg.psd_tol;
  } catch (const Error& e) {
    if (depth == 0 ||
        (e.code() != Errc::event_null && e.code() != Errc::acceptance_too_low)) {
      throw;
    }
    r.error = e.what();
    r.conditioned_gg_pass = false;
    r.truncated_psd_pass = false;
    return r;
  }

  if (r.passed() || cfg.force) {
    r.child = std::make_shared<const LevelReport>(descend_from(next, cfg, plan, seed, depth + 1));
  }
  return r;
}

}  // namespace

LevelReport descend(const Model& model, const DescendConfig& config, std::uint64_t seed) {
  if (config.n_condition < 2) throw Error(Errc::invalid_argument, "n_condition must be >= 2");
  int widest = std::max(config.n_condition, 3);
  for (const auto& obs : config.observables) widest = std::max(widest, obs.n + 1);
  widest = std::max(widest, 3);  // default observables use n = 2
  Plan plan{config.settings, config.tolerance, false};
  if (model.is_frozen() && enumeration_feasible(model, widest)) {
    plan.settings.backend = Backend::enumeration;
    plan.policy = TolerancePolicy::exact();
    plan.exact = true;
  } else {
    plan.settings.backend = Backend::monte_carlo;
  }
  return descend_from(Ensemble(model), config, plan, seed, 0);
}

CriterionReport criterion_run(const Model& model, double q,
                              const std::vector<TriplePattern>& patterns, int n_max,
                              const EstimationSettings& settings, std::uint64_t seed) {
  if (n_max < 3) throw Error(Errc::invalid_argument, "n_max must be >= 3");
  if (patterns.empty()) throw Error(Errc::invalid_argument, "at least one pattern is required");
  const OverlapGrid& grid = *model.grid();
  for (const auto& p : patterns) {
    for (Level l : p) {
      if (l < 0 || l > grid.top_level()) {
        throw Error(Errc::invalid_argument, "pattern level outside the grid");
      }
    }
  }
  CriterionReport report;
  report.q = q;
  report.ceiling = EventSpec::below(2, q).ceiling(grid);
  if (report.ceiling < 1) {
    throw Error(Errc::null_conditioning, "no grid level lies below q");
  }
  const Level c = report.ceiling;
  const std::size_t np = patterns.size();
  const std::size_t stride = np + 1;
  const auto den_col = [&](int n) { return 1 + static_cast<std::size_t>(n - 3) * stride; };
  const std::size_t dim = den_col(n_max + 1);

  const auto table = collect_moments(
      model, n_max, dim,
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        Level pm = v.at(0, 1);
        out[0] = pm <= c ? 1.0 : 0.0;
        for (int m = 3; m <= n_max; ++m) {
          for (int i = 0; i < m - 1; ++i) pm = std::max(pm, v.at(i, m - 1));
          if (pm > c) break;
          const std::size_t d = den_col(m);
          out[d] = 1.0;
          for (std::size_t b = 0; b < np; ++b) out[d + 1 + b] = matches(patterns[b], v) ? 1.0 : 0.0;
        }
      },
      settings, seed);

  report.exact = table.exact();
  const std::size_t zero[] = {0};
  const double one[] = {1.0};
  report.below_q = table.mean(0);
  report.below_q_se = table.linear_se(zero, one);
  if (report.below_q <= 0.0 || (!table.exact() && report.below_q <= 3.0 * report.below_q_se)) {
    throw Error(Errc::null_conditioning, "P(R_12 < q) is indistinguishable from zero");
  }

  const double slack = table.exact() ? 1e-12 : 0.0;
  for (std::size_t b = 0; b < np; ++b) {
    PatternSequence seq;
    seq.pattern = patterns[b];
    const std::size_t d3 = den_col(3);
    const bool base_defined = table.mean(d3) > 0.0;
    if (base_defined) {
      const std::size_t cols[] = {d3 + 1 + b, d3};
      const auto p3 = delta_method(table, cols, [](auto m) { return m[0] / m[1]; });
      seq.p3 = p3.value;
      seq.p3_se = p3.se;
    }
    for (int n = 3; n <= n_max; ++n) {
      CriterionPoint pt;
      pt.n = n;
      const std::size_t d = den_col(n);
      pt.defined = base_defined && table.mean(d) > 0.0;
      if (pt.defined) {
        const std::size_t cols[] = {d + 1 + b, d, d3 + 1 + b, d3};
        const auto p = delta_method(table, std::span(cols, 2), [](auto m) { return m[0] / m[1]; });
        const auto diff = delta_method(
            table, cols, [](auto m) { return m[0] / m[1] - m[2] / m[3]; });
        pt.p = p.value;
        pt.se = p.se;
        pt.diff = diff.value;
        pt.diff_se = diff.se;
        pt.combined_se = std::hypot(p.se, seq.p3_se);
        seq.max_deviation = std::max(seq.max_deviation, std::abs(pt.diff));
        if (std::abs(pt.diff) > 3.0 * pt.combined_se + slack) seq.consistent = false;
      }
      seq.sequence.push_back(pt);
    }
    report.consistent = report.consistent && seq.consistent;
    report.patterns.push_back(std::move(seq));
  }
  return report;
}

nlohmann::json to_json(const EstimateReport& r) {
  nlohmann::json j{{"estimate", r.estimate},
                   {"std_error", r.std_error},
                   {"inner_samples", r.inner_samples},
                   {"outer_samples", r.outer_samples}};
  j["acceptance_rate"] = r.acceptance_rate ? nlohmann::json(*r.acceptance_rate) : nlohmann::json();
  return j;
}

nlohmann::json to_json(const ResidualReport& r) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : r.rhs_terms) terms.push_back(to_json(t));
  return {{"lhs", to_json(r.lhs)},         {"rhs_terms", terms},
          {"rhs_weights", r.rhs_weights},  {"residual", r.residual},
          {"residual_se", r.residual_se},  {"pass", r.pass},
          {"exact", r.exact}};
}

nlohmann::json to_json(const LevelReport& r) {
  nlohmann::json gg = nlohmann::json::array();
  for (std::size_t i = 0; i < r.gg.size(); ++i) {
    auto g = to_json(r.gg[i]);
    g["observable"] = r.observables[i].id();
    gg.push_back(std::move(g));
  }
  nlohmann::json j{{"level", r.level},
                   {"top_value", r.top_value},
                   {"exact", r.exact},
                   {"collision_identity_pass", r.collision_identity_pass},
                   {"collision_pairs_checked", r.collision_pairs_checked},
                   {"ultra_violations_at_level", r.ultra_violations_at_level},
                   {"triples_checked", r.triples_checked},
                   {"conditioned_gg_pass", r.conditioned_gg_pass},
                   {"gg", gg},
                   {"truncated_psd_pass", r.truncated_psd_pass},
                   {"min_truncated_eigenvalue", r.min_truncated_eigenvalue},
                   {"psd_samples", r.psd_samples}};
  if (!r.error.empty()) j["error"] = r.error;
  j["child"] = r.child ? to_json(*r.child) : nlohmann::json();
  return j;
}

nlohmann::json to_json(const CriterionReport& r) {
  nlohmann::json pats = nlohmann::json::array();
  for (const auto& s : r.patterns) {
    nlohmann::json seq = nlohmann::json::array();
    for (const auto& p : s.sequence) {
      nlohmann::json pj{{"n", p.n}, {"defined", p.defined}};
      if (p.defined) {
        pj.update({{"p", p.p},
                   {"se", p.se},
                   {"diff", p.diff},
                   {"diff_se", p.diff_se},
                   {"combined_se", p.combined_se}});
      }
      seq.push_back(std::move(pj));
    }
    pats.push_back({{"pattern", s.pattern},
                    {"p3", s.p3},
                    {"p3_se", s.p3_se},
                    {"max_deviation", s.max_deviation},
                    {"consistent", s.consistent},
                    {"sequence", seq}});
  }
  return {{"q", r.q},           {"ceiling", r.ceiling},       {"below_q", r.below_q},
          {"below_q_se", r.below_q_se}, {"exact", r.exact}, {"consistent", r.consistent},
          {"patterns", pats}};
}

}  // namespace overlap_lab
