#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"
#include "overlap_lab/verifier.hpp"

namespace overlap_lab {

struct CollisionReport {
  bool pass = true;
  std::uint64_t pairs_checked = 0;
  struct Counterexample {
    std::size_t atom_a = 0;
    std::size_t atom_b = 0;
    Level level = 0;
  };
  std::optional<Counterexample> counterexample;
};

/// Samples atom pairs and checks that the top level occurs exactly for
/// identical atom indices.
CollisionReport collision_identity_check(const DiscreteMeasure& measure, std::uint64_t pairs,
                                         std::uint64_t seed);

struct DescendConfig {
  int n_condition = 4;
  std::vector<ObservableSpec> observables;  // empty: defaults per level
  EstimationSettings settings;
  std::uint64_t psd_samples = 200;
  std::uint64_t triples = 10'000;
  std::uint64_t collision_pairs = 10'000;
  double psd_tol = 1e-8;
  TolerancePolicy tolerance;
  bool force = false;
};

/// One step of the descent. `level` is the number of grid levels still in
/// play: the array at this step takes values in q_1..q_level.
struct LevelReport {
  int level = 1;
  double top_value = 0.0;
  bool exact = false;
  bool collision_identity_pass = true;
  std::uint64_t collision_pairs_checked = 0;
  std::uint64_t ultra_violations_at_level = 0;
  std::uint64_t triples_checked = 0;
  bool conditioned_gg_pass = true;
  std::vector<ObservableSpec> observables;
  std::vector<ResidualReport> gg;
  bool truncated_psd_pass = true;
  double min_truncated_eigenvalue = 0.0;
  std::uint64_t psd_samples = 0;
  /// Set when a forced level could not be evaluated (conditioning impossible).
  std::string error;
  std::shared_ptr<const LevelReport> child;

  bool passed() const noexcept {
    return error.empty() && collision_identity_pass && ultra_violations_at_level == 0 &&
           conditioned_gg_pass && truncated_psd_pass;
  }
  /// Whether this level and every descendant passed.
  bool all_passed() const noexcept { return passed() && (!child || child->all_passed()); }
};

/// Runs the conditioning/truncation descent from the model's full grid down
/// to a single level. Frozen models with a feasible tuple sum are evaluated
/// exactly. Throws acceptance_too_low when A_{n_condition} cannot occur.
LevelReport descend(const Model& model, const DescendConfig& config, std::uint64_t seed);

/// Entries for the pairs (1,2), (1,3), (2,3); 0 matches any level.
using TriplePattern = std::array<Level, 3>;

bool matches(const TriplePattern& pattern, const LevelView& v) noexcept;

struct CriterionPoint {
  int n = 3;
  bool defined = true;
  double p = 0.0;
  double se = 0.0;
  double diff = 0.0;     // P_n - P_3
  double diff_se = 0.0;  // delta-method SE of the difference
  double combined_se = 0.0;
};

struct PatternSequence {
  TriplePattern pattern{};
  double p3 = 0.0;
  double p3_se = 0.0;
  std::vector<CriterionPoint> sequence;  // n = 3..n_max
  double max_deviation = 0.0;
  bool consistent = true;
};

struct CriterionReport {
  double q = 0.0;
  Level ceiling = 0;
  double below_q = 0.0;  // P(R_12 < q)
  double below_q_se = 0.0;
  bool exact = false;
  std::vector<PatternSequence> patterns;
  bool consistent = true;
};

/// P_{n,q}(R^3 in B) for n = 3..n_max, one sequence per pattern.
/// Throws null_conditioning when P(R_12 < q) is within 3 SE of zero.
CriterionReport criterion_run(const Model& model, double q,
                              const std::vector<TriplePattern>& patterns, int n_max,
                              const EstimationSettings& settings, std::uint64_t seed);

nlohmann::json to_json(const LevelReport& r);
nlohmann::json to_json(const CriterionReport& r);
nlohmann::json to_json(const ResidualReport& r);
nlohmann::json to_json(const EstimateReport& r);

}  // namespace overlap_lab
