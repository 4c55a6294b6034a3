#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "overlap_lab/grid.hpp"
#include "overlap_lab/rng.hpp"

namespace overlap_lab {

/// Sparse vector with strictly increasing coordinate indices.
struct SparseVector {
  std::vector<std::uint32_t> index;
  std::vector<double> value;

  static SparseVector from_dense(const std::vector<double>& dense);
  double dot(const SparseVector& other) const noexcept;
  double squared_norm() const noexcept;
};

enum class MeasureKind { tree, explicit_atoms, adversarial };

const char* to_string(MeasureKind kind) noexcept;

/// Discrete directing measure G = sum_i w_i delta_{xi_i} on R^d.
///
/// Atoms live in a finite-dimensional space standing in for the Hilbert
/// space of the representation; only inner products are ever used. All
/// pairwise inner products (including each atom with itself) must sit on
/// the grid within kLevelTolerance, so replica overlaps can be looked up as
/// exact levels.
class DiscreteMeasure {
 public:
  DiscreteMeasure(MeasureKind kind, std::vector<SparseVector> atoms,
                  std::vector<double> weights,
                  std::shared_ptr<const OverlapGrid> grid, std::size_t dimension);

  MeasureKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<SparseVector>& atoms() const noexcept { return atoms_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const OverlapGrid& grid() const noexcept { return *grid_; }
  const std::shared_ptr<const OverlapGrid>& grid_ptr() const noexcept { return grid_; }

  /// Grid level of atoms[a] . atoms[b]; throws off_grid_overlap.
  Level pair_level(std::size_t a, std::size_t b) const;

  /// Draws an atom index according to the weights.
  std::size_t sample_atom(Rng& rng) const;

  /// Sum of squared weights: probability two replicas pick the same atom.
  double collision_probability() const noexcept;

 private:
  MeasureKind kind_;
  std::vector<SparseVector> atoms_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  std::vector<Level> pair_table_;  // cached levels for small measures, 0 = off grid
  std::shared_ptr<const OverlapGrid> grid_;
  std::size_t dimension_;
};

/// P(R_12 = q_l) for a fixed measure, by exact summation over atom pairs.
/// Tree measures carry these in their grid already; other kinds are summed
/// directly (m <= 20000).
std::vector<double> level_probabilities(const DiscreteMeasure& measure);

// ---------------------------------------------------------------------------
// Hierarchical (Ruelle cascade) measures.

struct TreeMeasureSpec {
  /// Levels q_1 < ... < q_k, all positive; the emitted grid prepends 0.
  OverlapGrid grid = OverlapGrid::on_sphere({1.0});
  int branching = 2;
  std::vector<double> zetas;  // 0 < zeta_1 < ... < zeta_k < 1
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMaxTreeAtoms = 1'000'000;

/// Top-B points of a Poisson process with intensity zeta x^(-1-zeta),
/// normalized: u_i = Gamma_i^(-1/zeta) with Gamma_i partial sums of
/// standard exponentials. Strictly decreasing.
std::vector<double> sample_pd_weights(double zeta, int branching, std::uint64_t seed);

/// Unnormalized log-points log(Gamma_i^(-1/zeta)) for the same process.
std::vector<double> sample_pd_log_points(double zeta, int branching, std::uint64_t seed);

/// Depth-k B-ary tree measure. Leaves are atoms; the atom of a leaf is the
/// sum over its path vertices v (depth j) of sqrt(q_j - q_{j-1}) e_v, so two
/// leaves overlap at q_{depth of their last common ancestor} with q_0 = 0.
/// Leaf weights are products of Poisson points along the path (parameter
/// zeta_j for children at depth j), normalized over all leaves.
DiscreteMeasure build_tree_measure(const TreeMeasureSpec& spec);

/// Grid emitted by build_tree_measure (levels 0, q_1..q_k), without probs.
OverlapGrid tree_grid(const TreeMeasureSpec& spec);

void validate_tree_spec(const TreeMeasureSpec& spec);

// ---------------------------------------------------------------------------

/// User-specified measure. Every inner product (norms included) must lie on
/// the grid.
DiscreteMeasure explicit_measure(const std::vector<std::vector<double>>& atoms,
                                 std::vector<double> weights, OverlapGrid grid);

/// Three equal-weight atoms with Gram [[1,.7,.7],[.7,1,.3],[.7,.3,1]]: PSD,
/// exchangeable when sampled, but not ultrametric. The seed picks a random
/// reflection of the atoms, which leaves the Gram unchanged.
DiscreteMeasure adversarial_measure(std::uint64_t seed);

nlohmann::json to_json(const DiscreteMeasure& measure);
DiscreteMeasure measure_from_json(const nlohmann::json& j);

}  // namespace overlap_lab
