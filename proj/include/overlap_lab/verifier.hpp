#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "overlap_lab/estimation.hpp"
#include "overlap_lab/observables.hpp"

namespace overlap_lab {

/// Residual acceptance. Statistical noise is z standard errors; abs_tol
/// absorbs systematic bias (e.g. truncated Poisson-Dirichlet weights).
struct TolerancePolicy {
  double z = 3.0;
  double abs_tol = 0.01;

  /// |r| <= max(abs_tol, z * se)
  bool accepts_max(double residual, double se) const noexcept;
  /// |r| <= z * se + abs_tol
  bool accepts_sum(double residual, double se) const noexcept;

  /// Policy for enumerated (noise-free) residuals.
  static TolerancePolicy exact() noexcept { return {3.0, 1e-12}; }
};

struct ResidualReport {
  EstimateReport lhs;
  std::vector<EstimateReport> rhs_terms;
  std::vector<double> rhs_weights;
  double residual = 0.0;
  double residual_se = 0.0;
  bool pass = false;
  bool exact = false;
};

/// Ghirlanda-Guerra residual
///   E f psi(R_{1,n+1}) - (1/n) E f E psi(R_12) - (1/n) sum_{l=2..n} E f psi(R_{1,l})
/// estimated on common (n+1)-replica tuples. With `conditioned`, each
/// expectation is taken under the law given distinct replicas (A_{n+1} for
/// the left side, A_n for f, A_2 for psi(R_12)), i.e. the identity for the
/// conditioned array.
std::vector<ResidualReport> gg_residuals(const Ensemble& ensemble,
                                         std::span<const ObservableSpec> observables,
                                         const EstimationSettings& settings, std::uint64_t seed,
                                         const std::optional<EventSpec>& conditioned = std::nullopt,
                                         TolerancePolicy policy = {});

ResidualReport gg_residual(const Ensemble& ensemble, const ObservableSpec& obs,
                           const EstimationSettings& settings, std::uint64_t seed,
                           const std::optional<EventSpec>& conditioned = std::nullopt,
                           TolerancePolicy policy = {});

struct MassPoint {
  int n = 2;
  double estimate = 0.0;   // E<I_{A_n}>
  double reference = 0.0;  // (1 - p_k)^(n-1)
  double residual = 0.0;
  double se = 0.0;
  double estimate_se = 0.0;
  bool pass = false;
};

struct MassReport {
  double p_top = 0.0;
  double p_top_se = 0.0;
  std::vector<MassPoint> points;  // n = 2..n_max
  bool pass = false;
};

/// E<I_{A_n}> against (1 - p_k)^(n-1), p_k estimated on the same tuples.
MassReport distinct_mass_check(const Ensemble& ensemble, int n_max,
                               const EstimationSettings& settings, std::uint64_t seed,
                               TolerancePolicy policy = {});

/// E<f I_{A_{n+1}}> - (1 - p_k) E<f I_{A_n}>.
ResidualReport lemma1_check(const Ensemble& ensemble, const FSpec& f, int n,
                            const EstimationSettings& settings, std::uint64_t seed,
                            TolerancePolicy policy = {});

/// E<f I_{A_{n+1}}>/E<I_{A_{n+1}}> - E<f I_{A_n}>/E<I_{A_n}>. Throws
/// divide_by_zero when either event mass is within 3 SE of zero.
ResidualReport consistency_check(const Ensemble& ensemble, const FSpec& f, int n,
                                 const EstimationSettings& settings, std::uint64_t seed,
                                 TolerancePolicy policy = {});

struct MarginalPoint {
  Level level = 1;
  double conditional = 0.0;  // P(R_12 = q_l | A_2)
  double conditional_se = 0.0;
  double reference = 0.0;    // p_l / (1 - p_k)
  double reference_se = 0.0;
  double residual = 0.0;
  double se = 0.0;
  bool pass = false;
};

struct MarginalReport {
  std::vector<MarginalPoint> points;  // levels 1..k-1
  bool pass = false;
};

/// Two-replica law given A_2 against p_l / (1 - p_k). The two sides are
/// estimated from independent streams.
MarginalReport conditional_marginal_check(const Ensemble& ensemble,
                                          const EstimationSettings& settings,
                                          std::uint64_t seed, TolerancePolicy policy = {});

struct SupportReport {
  double max_deviation = 0.0;
  std::size_t worst_atom = 0;
  std::size_t atoms_checked = 0;
  bool pass = false;
};

inline constexpr double kSupportTolerance = 1e-10;

/// Max | |atom|^2 - q_k | over atoms of weight > 1e-12.
SupportReport support_check(const DiscreteMeasure& measure);

struct PositivityReport {
  double min_overlap = 0.0;
  std::size_t pairs_checked = 0;
  bool pass = false;
};

/// Smallest off-diagonal overlap seen; passes when >= -1e-12.
PositivityReport positivity_check(const Ensemble& ensemble, const EstimationSettings& settings,
                                  std::uint64_t seed);

}  // namespace overlap_lab
