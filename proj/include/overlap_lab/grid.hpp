#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"

namespace overlap_lab {

/// Grid level index. Off-diagonal entries use 1..k; 0 marks the diagonal.
using Level = std::int16_t;
inline constexpr Level kDiag = 0;

/// Maximum distance between an inner product and a grid value for the two
/// to be identified.
inline constexpr double kLevelTolerance = 1e-10;

/// Finite overlap support q_1 < ... < q_k with optional level probabilities
/// and the value used on the diagonal.
class OverlapGrid {
 public:
  OverlapGrid(std::vector<double> levels,
              std::optional<std::vector<double>> probs, double self_overlap);

  /// Grid with no probabilities whose self-overlap is the top level.
  static OverlapGrid on_sphere(std::vector<double> levels);

  int size() const noexcept { return static_cast<int>(levels_.size()); }
  Level top_level() const noexcept { return static_cast<Level>(levels_.size()); }
  double top() const noexcept { return levels_.back(); }
  double self_overlap() const noexcept { return self_overlap_; }
  const std::vector<double>& levels() const noexcept { return levels_; }
  const std::optional<std::vector<double>>& probs() const noexcept {
    return probs_;
  }

  /// Value of a level; kDiag maps to the self-overlap.
  double value(Level level) const;

  /// Level whose value lies within `tol` of x, if any.
  std::optional<Level> find_level(double x, double tol = kLevelTolerance) const;

  /// Largest level with value strictly below q (0 when none is).
  Level level_below(double q) const noexcept;

  /// Grid of the array min(R, q_top): levels 1..top, self-overlap q_top,
  /// probability mass above `top` merged into `top`.
  OverlapGrid truncated(Level top) const;

  friend bool operator==(const OverlapGrid&, const OverlapGrid&) = default;

 private:
  std::vector<double> levels_;
  std::optional<std::vector<double>> probs_;
  double self_overlap_;
};

nlohmann::json to_json(const OverlapGrid& grid);
OverlapGrid grid_from_json(const nlohmann::json& j);

}  // namespace overlap_lab
