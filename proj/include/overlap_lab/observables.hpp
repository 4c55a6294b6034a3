#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "overlap_lab/level_matrix.hpp"

namespace overlap_lab {

/// Replica positions are 1-based and ordered (a < b).
struct PairLevel {
  int a = 1;
  int b = 2;
  Level level = 1;
};

struct PairPower {
  int a = 1;
  int b = 2;
  int power = 1;
};

inline constexpr int kMaxPower = 8;

/// Bounded test function f of the overlaps among the first n replicas:
/// either an indicator that listed pairs sit at listed levels (an empty
/// pattern is f = 1) or a monomial in the realized overlaps.
struct FSpec {
  enum class Kind { pattern, monomial };

  Kind kind = Kind::pattern;
  std::vector<PairLevel> pattern;
  std::vector<PairPower> monomial;

  static FSpec one() { return {}; }
  static FSpec levels(std::vector<PairLevel> p) { return {Kind::pattern, std::move(p), {}}; }
  static FSpec product(std::vector<PairPower> m) { return {Kind::monomial, {}, std::move(m)}; }

  double operator()(const LevelView& v) const;
  int max_replica() const;
  std::string id() const;
};

/// psi applied to a single overlap: x^p or the indicator of one level.
struct PsiSpec {
  enum class Kind { power, level };

  Kind kind = Kind::power;
  int param = 1;

  static PsiSpec power(int p) { return {Kind::power, p}; }
  static PsiSpec level(Level l) { return {Kind::level, l}; }

  double operator()(Level l, const OverlapGrid& grid) const;
  std::string id() const;
};

struct ObservableSpec {
  int n = 2;
  FSpec f;
  PsiSpec psi;

  /// Throws invalid_argument on out-of-range positions, powers or levels.
  void validate(const OverlapGrid& grid) const;
  std::string id() const;
};

/// f in {1, I(R_12 = l)} x psi in {x, x^2, I(. = l)} for each n in ns.
std::vector<ObservableSpec> default_observables(const OverlapGrid& grid,
                                                const std::vector<int>& ns = {2, 3});

nlohmann::json to_json(const FSpec& f);
nlohmann::json to_json(const ObservableSpec& obs);
FSpec fspec_from_json(const nlohmann::json& j);
ObservableSpec observable_from_json(const nlohmann::json& j);

}  // namespace overlap_lab
