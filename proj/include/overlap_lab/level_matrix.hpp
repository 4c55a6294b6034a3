#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"
#include "overlap_lab/grid.hpp"
#include "overlap_lab/linalg.hpp"

namespace overlap_lab {

/// Non-owning view of an n x n level array in row-major order. Used on the
/// sampling hot path where materializing a LevelMatrix per tuple would cost
/// an allocation.
class LevelView {
 public:
  LevelView(const OverlapGrid& grid, int n, std::span<const Level> entries)
      : grid_(&grid), n_(n), entries_(entries) {}

  int n() const noexcept { return n_; }
  const OverlapGrid& grid() const noexcept { return *grid_; }
  Level at(int i, int j) const noexcept { return entries_[i * n_ + j]; }
  double value(int i, int j) const { return grid_->value(at(i, j)); }
  std::span<const Level> entries() const noexcept { return entries_; }

  /// Largest off-diagonal level among the first m replicas (0 if m < 2).
  Level max_off_diagonal(int m) const noexcept;
  Level min_off_diagonal(int m) const noexcept;

 private:
  const OverlapGrid* grid_;
  int n_;
  std::span<const Level> entries_;
};

/// Symmetric overlap matrix stored as grid-level indices. Immutable.
class LevelMatrix {
 public:
  /// Validates symmetry, the diagonal marker and level bounds.
  LevelMatrix(std::shared_ptr<const OverlapGrid> grid, int n,
              std::vector<Level> entries);

  /// Builds the matrix from a level for each pair i < j.
  static LevelMatrix from_pairs(std::shared_ptr<const OverlapGrid> grid, int n,
                                const std::function<Level(int, int)>& level);

  int n() const noexcept { return n_; }
  Level at(int i, int j) const noexcept { return entries_[i * n_ + j]; }
  double value(int i, int j) const { return grid_->value(at(i, j)); }
  const OverlapGrid& grid() const noexcept { return *grid_; }
  const std::shared_ptr<const OverlapGrid>& grid_ptr() const noexcept {
    return grid_;
  }
  const std::vector<Level>& entries() const noexcept { return entries_; }
  LevelView view() const noexcept { return {*grid_, n_, entries_}; }

  /// Simultaneous row/column relabeling: result(i, j) = this(perm[i], perm[j]).
  LevelMatrix permuted(std::span<const int> perm) const;

  /// Principal submatrix of the first m replicas.
  LevelMatrix leading(int m) const;

  friend bool operator==(const LevelMatrix& a, const LevelMatrix& b) {
    return a.n_ == b.n_ && a.entries_ == b.entries_ && *a.grid_ == *b.grid_;
  }

 private:
  std::shared_ptr<const OverlapGrid> grid_;
  int n_;
  std::vector<Level> entries_;
};

/// Real matrix with q values off the diagonal and the self-overlap on it.
DenseMatrix realize(const LevelMatrix& m);
DenseMatrix realize(const LevelView& m);

/// Entrywise minimum with q_{k-1}; diagonal becomes q_{k-1}.
LevelMatrix truncate(const LevelMatrix& m);

/// Entrywise minimum with q_top for any 1 <= top <= k.
LevelMatrix truncate_to(const LevelMatrix& m, Level top);

nlohmann::json to_json(const LevelMatrix& m);
LevelMatrix level_matrix_from_json(const nlohmann::json& j);

}  // namespace overlap_lab
