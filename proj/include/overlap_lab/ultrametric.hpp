#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "overlap_lab/level_matrix.hpp"
#include "overlap_lab/linalg.hpp"

namespace overlap_lab {

struct TripleWitness {
  std::array<int, 3> replicas;  // a < b < c
  std::array<Level, 3> levels;  // (a,b), (a,c), (b,c)
};

struct ViolationReport {
  std::uint64_t triples_checked = 0;
  std::uint64_t violations = 0;
  std::optional<TripleWitness> first_witness;
};

/// Above this size triples are sampled rather than enumerated.
inline constexpr int kExhaustiveTripleLimit = 200;

struct TripleSampling {
  std::uint64_t samples = 1'000'000;
  std::uint64_t seed = 0;
};

/// Counts unordered triples whose three pairwise levels have a unique
/// minimum, i.e. triples violating R_23 >= min(R_12, R_13) in some labeling.
ViolationReport check_ultrametric(const LevelView& m, TripleSampling sampling = {});
ViolationReport check_ultrametric(const LevelMatrix& m, TripleSampling sampling = {});

/// Level form restricted to one threshold: triples where two pairs reach
/// `level` and the third does not.
ViolationReport check_ultrametric_at_level(const LevelView& m, Level level);

struct PsdResult {
  bool psd = false;
  double min_eigenvalue = 0.0;
};

/// PSD test of realize(m): min eigenvalue >= -tol * n * max|entry|.
PsdResult is_psd(const LevelMatrix& m, double tol = 1e-9);
PsdResult is_psd(const DenseMatrix& a, double tol = 1e-9);

}  // namespace overlap_lab
