#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "overlap_lab/level_matrix.hpp"
#include "overlap_lab/measure.hpp"

namespace overlap_lab {

/// Source of directing measures: either one frozen measure (E is trivial)
/// or a random tree measure redrawn for every outer replication.
class Model {
 public:
  static Model frozen(DiscreteMeasure measure, std::string id = "frozen");
  static Model tree(TreeMeasureSpec spec, std::string id = "tree");

  const std::string& id() const noexcept { return id_; }
  bool is_frozen() const noexcept { return frozen_ != nullptr; }

  /// Levels and self-overlap shared by every draw (no probabilities).
  const std::shared_ptr<const OverlapGrid>& grid() const noexcept { return grid_; }

  /// Measure for one outer replication; frozen models ignore the seed.
  std::shared_ptr<const DiscreteMeasure> draw(std::uint64_t seed) const;

  /// The frozen measure, or null for random models.
  const std::shared_ptr<const DiscreteMeasure>& frozen_measure() const noexcept {
    return frozen_;
  }

 private:
  Model() = default;

  std::string id_;
  std::shared_ptr<const OverlapGrid> grid_;
  std::shared_ptr<const DiscreteMeasure> frozen_;
  std::optional<TreeMeasureSpec> tree_;
};

/// A model viewed through a ceiling: replica tuples count only when every
/// off-diagonal level is <= ceiling, and the array is read on the grid
/// truncated at the ceiling. This is how the conditioned and truncated
/// arrays of the induction are represented without rebuilding their
/// directing measures.
class Ensemble {
 public:
  Ensemble(Model model);  // NOLINT(google-explicit-constructor)
  Ensemble(Model model, Level ceiling);

  const Model& model() const noexcept { return model_; }
  std::optional<Level> ceiling() const noexcept { return ceiling_; }
  Level top() const noexcept { return grid_->top_level(); }
  const OverlapGrid& grid() const noexcept { return *grid_; }
  const std::shared_ptr<const OverlapGrid>& grid_ptr() const noexcept { return grid_; }
  std::string id() const;

  /// The ensemble conditioned on "no pair at the current top level" and
  /// truncated one level down. Throws grid_too_small at top 1.
  Ensemble conditioned() const;

  /// Ensemble with an explicit ceiling at or below the current one.
  Ensemble capped(Level ceiling) const;

  /// Whether the first m replicas of a base-model tuple belong to the ensemble.
  bool admits(const LevelView& v, int m) const noexcept {
    return !ceiling_ || v.max_off_diagonal(m) <= *ceiling_;
  }

 private:
  Model model_;
  std::optional<Level> ceiling_;
  std::shared_ptr<const OverlapGrid> grid_;
};

/// A_n (replicas pairwise distinct: no overlap at the top level) or A_{n,q}
/// (every overlap strictly below q).
struct EventSpec {
  enum class Kind { distinct, below };

  Kind kind = Kind::distinct;
  int n = 2;
  std::optional<double> q;

  static EventSpec distinct(int n) { return {Kind::distinct, n, std::nullopt}; }
  static EventSpec below(int n, double q) { return {Kind::below, n, q}; }

  /// Highest admissible off-diagonal level when `top` is the current top.
  Level ceiling(const OverlapGrid& grid, Level top) const;
  Level ceiling(const OverlapGrid& grid) const { return ceiling(grid, grid.top_level()); }

  bool holds(const LevelView& v) const {
    return v.max_off_diagonal(n) <= ceiling(v.grid());
  }

  std::string describe() const;
};

struct ReplicaDraw {
  std::vector<std::size_t> atom_indices;
  LevelMatrix matrix;
};

/// n i.i.d. replicas from the measure and their overlap levels.
ReplicaDraw draw_replicas(const DiscreteMeasure& measure, int n, std::uint64_t seed);

struct ConditionalDraw {
  ReplicaDraw draw;
  std::size_t attempts = 0;
};

inline constexpr std::size_t kDefaultMaxAttempts = 1'000'000;

/// Rejection sampling from the law of the n-tuple given the event, for a
/// fixed measure. Throws acceptance_too_low once max_attempts is spent.
ConditionalDraw conditional_draw(const DiscreteMeasure& measure, const EventSpec& event,
                                 std::uint64_t seed,
                                 std::size_t max_attempts = kDefaultMaxAttempts);

inline constexpr double kMaxEnumeratedTuples = 1e7;

using Statistic = std::function<double(const LevelView&)>;

/// Visits every atom n-tuple of a fixed measure with its probability.
void enumerate_tuples(
    const DiscreteMeasure& measure, int n,
    const std::function<void(const LevelView&, std::span<const std::size_t>, double)>& visit);

/// Exact <stat> or <stat | event> by summing over all m^n atom tuples.
double enumerate_statistic(const DiscreteMeasure& measure, const Statistic& stat, int n,
                           const std::optional<EventSpec>& event = std::nullopt);

}  // namespace overlap_lab
