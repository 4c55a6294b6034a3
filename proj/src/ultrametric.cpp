#include "overlap_lab/ultrametric.hpp"

#include <algorithm>

#include "overlap_lab/rng.hpp"

namespace overlap_lab {

namespace {

bool unique_minimum(Level x, Level y, Level z) {
  const Level m = std::min({x, y, z});
  return (x == m) + (y == m) + (z == m) == 1;
}

void record(ViolationReport& r, int a, int b, int c, Level ab, Level ac, Level bc) {
  ++r.violations;
  if (!r.first_witness) r.first_witness = TripleWitness{{a, b, c}, {ab, ac, bc}};
}

}  // namespace

ViolationReport check_ultrametric(const LevelView& m, TripleSampling sampling) {
  ViolationReport r;
  const int n = m.n();
  if (n < 3) return r;
  if (n <= kExhaustiveTripleLimit) {
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        for (int c = b + 1; c < n; ++c) {
          ++r.triples_checked;
          const Level ab = m.at(a, b), ac = m.at(a, c), bc = m.at(b, c);
          if (unique_minimum(ab, ac, bc)) record(r, a, b, c, ab, ac, bc);
        }
      }
    }
    return r;
  }
  Rng rng(sampling.seed);
  for (std::uint64_t s = 0; s < sampling.samples; ++s) {
    std::array<int, 3> t;
    t[0] = static_cast<int>(rng.below(n));
    do { t[1] = static_cast<int>(rng.below(n)); } while (t[1] == t[0]);
    do { t[2] = static_cast<int>(rng.below(n)); } while (t[2] == t[0] || t[2] == t[1]);
    std::sort(t.begin(), t.end());
    ++r.triples_checked;
    const Level ab = m.at(t[0], t[1]), ac = m.at(t[0], t[2]), bc = m.at(t[1], t[2]);
    if (unique_minimum(ab, ac, bc)) record(r, t[0], t[1], t[2], ab, ac, bc);
  }
  return r;
}

ViolationReport check_ultrametric(const LevelMatrix& m, TripleSampling sampling) {
  return check_ultrametric(m.view(), sampling);
}

ViolationReport check_ultrametric_at_level(const LevelView& m, Level level) {
  ViolationReport r;
  const int n = m.n();
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      for (int c = b + 1; c < n; ++c) {
        ++r.triples_checked;
        const Level ab = m.at(a, b), ac = m.at(a, c), bc = m.at(b, c);
        const int reached = (ab >= level) + (ac >= level) + (bc >= level);
        if (reached == 2) record(r, a, b, c, ab, ac, bc);
      }
    }
  }
  return r;
}

PsdResult is_psd(const DenseMatrix& a, double tol) {
  PsdResult r;
  if (a.n() == 0) {
    r.psd = true;
    return r;
  }
  const auto eig = symmetric_eigenvalues(a);
  r.min_eigenvalue = eig.eigenvalues.front();
  r.psd = r.min_eigenvalue >= -tol * a.n() * a.max_abs();
  return r;
}

PsdResult is_psd(const LevelMatrix& m, double tol) { return is_psd(realize(m), tol); }

}  // namespace overlap_lab
