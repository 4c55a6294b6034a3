#include "overlap_lab/measure.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "overlap_lab/errors.hpp"

namespace overlap_lab {

namespace {
constexpr std::size_t kPairTableLimit = 256;
}  // namespace

SparseVector SparseVector::from_dense(const std::vector<double>& dense) {
  SparseVector v;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) {
      v.index.push_back(static_cast<std::uint32_t>(i));
      v.value.push_back(dense[i]);
    }
  }
  return v;
}

double SparseVector::dot(const SparseVector& other) const noexcept {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < index.size() && j < other.index.size()) {
    if (index[i] == other.index[j]) {
      s += value[i++] * other.value[j++];
    } else if (index[i] < other.index[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return s;
}

double SparseVector::squared_norm() const noexcept {
  double s = 0.0;
  for (double x : value) s += x * x;
  return s;
}

const char* to_string(MeasureKind kind) noexcept {
  switch (kind) {
    case MeasureKind::tree: return "tree";
    case MeasureKind::explicit_atoms: return "explicit";
    case MeasureKind::adversarial: return "adversarial";
  }
  return "unknown";
}

DiscreteMeasure::DiscreteMeasure(MeasureKind kind, std::vector<SparseVector> atoms,
                                 std::vector<double> weights,
                                 std::shared_ptr<const OverlapGrid> grid,
                                 std::size_t dimension)
    : kind_(kind),
      atoms_(std::move(atoms)),
      weights_(std::move(weights)),
      grid_(std::move(grid)),
      dimension_(dimension) {
  if (!grid_) throw Error(Errc::invalid_argument, "measure without a grid");
  if (atoms_.empty()) throw Error(Errc::invalid_argument, "measure needs at least one atom");
  if (weights_.size() != atoms_.size()) {
    throw Error(Errc::bad_weights, "weight count differs from atom count");
  }
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw Error(Errc::bad_weights, "weights must be positive and finite");
    }
  }
  cumulative_.resize(weights_.size());
  std::partial_sum(weights_.begin(), weights_.end(), cumulative_.begin());
  if (std::abs(cumulative_.back() - 1.0) > 1e-12) {
    throw Error(Errc::bad_weights, "weights sum to " + std::to_string(cumulative_.back()));
  }
  const std::size_t m = atoms_.size();
  if (m <= kPairTableLimit) {
    pair_table_.assign(m * m, Level{0});
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a; b < m; ++b) {
        const Level l = grid_->find_level(atoms_[a].dot(atoms_[b])).value_or(Level{0});
        pair_table_[a * m + b] = l;
        pair_table_[b * m + a] = l;
      }
    }
  }
}

Level DiscreteMeasure::pair_level(std::size_t a, std::size_t b) const {
  if (!pair_table_.empty()) {
    const Level l = pair_table_[a * atoms_.size() + b];
    if (l != 0) return l;
  }
  const double x = atoms_[a].dot(atoms_[b]);
  if (auto level = grid_->find_level(x)) return *level;
  throw Error(Errc::off_grid_overlap, "inner product " + std::to_string(x) + " of atoms " +
                                          std::to_string(a) + "," + std::to_string(b) +
                                          " matches no grid level");
}

std::size_t DiscreteMeasure::sample_atom(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<std::size_t>(it - cumulative_.begin());
}

double DiscreteMeasure::collision_probability() const noexcept {
  double s = 0.0;
  for (double w : weights_) s += w * w;
  return s;
}

std::vector<double> level_probabilities(const DiscreteMeasure& measure) {
  if (measure.kind() == MeasureKind::tree && measure.grid().probs()) {
    return *measure.grid().probs();
  }
  if (measure.size() > 20000) {
    throw Error(Errc::too_large, "pairwise level summation limited to 20000 atoms");
  }
  std::vector<double> p(measure.grid().size(), 0.0);
  const auto& w = measure.weights();
  for (std::size_t a = 0; a < measure.size(); ++a) {
    for (std::size_t b = 0; b < measure.size(); ++b) {
      p[measure.pair_level(a, b) - 1] += w[a] * w[b];
    }
  }
  return p;
}

// ---------------------------------------------------------------------------

std::vector<double> sample_pd_log_points(double zeta, int branching, std::uint64_t seed) {
  if (!(zeta > 0.0 && zeta < 1.0)) {
    throw Error(Errc::bad_zeta, "zeta must lie in (0,1), got " + std::to_string(zeta));
  }
  if (branching < 1) throw Error(Errc::invalid_argument, "branching must be >= 1");
  Rng rng(seed);
  std::vector<double> log_points(branching);
  double gamma = 0.0;
  for (double& lp : log_points) {
    gamma += rng.exponential();
    lp = -std::log(gamma) / zeta;
  }
  return log_points;
}

namespace {

std::vector<double> normalize_log_weights(const std::vector<double>& log_w) {
  const double top = *std::max_element(log_w.begin(), log_w.end());
  std::vector<double> w(log_w.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_w[i] - top);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

std::vector<double> sample_pd_weights(double zeta, int branching, std::uint64_t seed) {
  return normalize_log_weights(sample_pd_log_points(zeta, branching, seed));
}

void validate_tree_spec(const TreeMeasureSpec& spec) {
  const auto& q = spec.grid.levels();
  if (q.front() <= 0.0) {
    throw Error(Errc::invalid_argument, "tree levels must be positive (0 is prepended)");
  }
  if (spec.branching < 2) throw Error(Errc::invalid_argument, "branching must be >= 2");
  if (spec.zetas.size() != q.size()) {
    throw Error(Errc::invalid_argument, "need one zeta per tree level");
  }
  for (std::size_t j = 0; j < spec.zetas.size(); ++j) {
    const double z = spec.zetas[j];
    if (!(z > 0.0 && z < 1.0)) throw Error(Errc::bad_zeta, "zetas must lie in (0,1)");
    if (j > 0 && !(z > spec.zetas[j - 1])) {
      throw Error(Errc::bad_zeta, "zetas must be strictly increasing");
    }
  }
  double atoms = 1.0;
  for (std::size_t j = 0; j < q.size(); ++j) atoms *= spec.branching;
  if (atoms > static_cast<double>(kMaxTreeAtoms)) {
    throw Error(Errc::too_many_atoms,
                "B^k = " + std::to_string(atoms) + " exceeds " + std::to_string(kMaxTreeAtoms));
  }
}

OverlapGrid tree_grid(const TreeMeasureSpec& spec) {
  std::vector<double> levels{0.0};
  levels.insert(levels.end(), spec.grid.levels().begin(), spec.grid.levels().end());
  return OverlapGrid::on_sphere(std::move(levels));
}

DiscreteMeasure build_tree_measure(const TreeMeasureSpec& spec) {
  validate_tree_spec(spec);
  const auto& q = spec.grid.levels();
  const int depth = static_cast<int>(q.size());
  const std::size_t b = static_cast<std::size_t>(spec.branching);

  // count[j] vertices at depth j; vertex ids at depth j start at offset[j].
  std::vector<std::size_t> count(depth + 1, 1), offset(depth + 1, 0);
  for (int j = 1; j <= depth; ++j) {
    count[j] = count[j - 1] * b;
    offset[j] = (j == 1) ? 0 : offset[j - 1] + count[j - 1];
  }
  const std::size_t dimension = offset[depth] + count[depth];
  const std::size_t leaves = count[depth];

  // Log of the Poisson point attached to each vertex, accumulated along paths.
  std::vector<double> path_log(1, 0.0);
  for (int j = 1; j <= depth; ++j) {
    std::vector<double> next(count[j]);
    for (std::size_t parent = 0; parent < count[j - 1]; ++parent) {
      const auto pts = sample_pd_log_points(
          spec.zetas[j - 1], spec.branching,
          derive_seed(spec.seed, {static_cast<std::uint64_t>(j), parent}));
      for (std::size_t c = 0; c < b; ++c) next[parent * b + c] = path_log[parent] + pts[c];
    }
    path_log = std::move(next);
  }
  std::vector<double> weights = normalize_log_weights(path_log);

  std::vector<double> increment(depth);
  for (int j = 0; j < depth; ++j) {
    increment[j] = std::sqrt(q[j] - (j == 0 ? 0.0 : q[j - 1]));
  }
  std::vector<SparseVector> atoms(leaves);
  for (std::size_t leaf = 0; leaf < leaves; ++leaf) {
    SparseVector& v = atoms[leaf];
    v.index.resize(depth);
    v.value.resize(depth);
    std::size_t below = leaves;
    for (int j = 1; j <= depth; ++j) {
      below /= b;
      v.index[j - 1] = static_cast<std::uint32_t>(offset[j] + leaf / below);
      v.value[j - 1] = increment[j - 1];
    }
  }

  // Exact level probabilities. P(last common ancestor at depth j) is the sum over
  // depth-j vertices of sum_{c != c'} m_c m_c' over children, accumulated as
  // nonnegative cross terms. P(same leaf) is the sum of squared leaf masses.
  std::vector<double> probs(depth + 1, 0.0);
  std::vector<double> mass = weights;
  for (double m : mass) probs[depth] += m * m;
  std::vector<double> suffix(b + 1);
  for (int j = depth; j >= 1; --j) {
    std::vector<double> up(count[j - 1], 0.0);
    double cross = 0.0;
    for (std::size_t parent = 0; parent < count[j - 1]; ++parent) {
      const double* kids = mass.data() + parent * b;
      suffix[b] = 0.0;
      for (std::size_t c = b; c-- > 0;) suffix[c] = suffix[c + 1] + kids[c];
      double prefix = 0.0;
      for (std::size_t c = 0; c < b; ++c) {
        cross += kids[c] * (prefix + suffix[c + 1]);
        prefix += kids[c];
      }
      up[parent] = suffix[0];
    }
    probs[j - 1] = cross;
    mass = std::move(up);
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= total;

  OverlapGrid base = tree_grid(spec);
  auto grid = std::make_shared<const OverlapGrid>(
      std::vector<double>(base.levels()), std::move(probs), q.back());
  return DiscreteMeasure(MeasureKind::tree, std::move(atoms), std::move(weights),
                         std::move(grid), dimension);
}

// ---------------------------------------------------------------------------

namespace {

DiscreteMeasure checked_measure(MeasureKind kind, const std::vector<std::vector<double>>& atoms,
                                std::vector<double> weights, OverlapGrid grid) {
  if (atoms.empty()) throw Error(Errc::invalid_argument, "measure needs at least one atom");
  const std::size_t d = atoms.front().size();
  std::vector<SparseVector> sparse;
  sparse.reserve(atoms.size());
  for (const auto& a : atoms) {
    if (a.size() != d) throw Error(Errc::invalid_argument, "atoms differ in dimension");
    sparse.push_back(SparseVector::from_dense(a));
  }
  DiscreteMeasure m(kind, std::move(sparse), std::move(weights),
                    std::make_shared<const OverlapGrid>(std::move(grid)), d);
  for (std::size_t a = 0; a < m.size(); ++a) {
    for (std::size_t b = a; b < m.size(); ++b) m.pair_level(a, b);
  }
  return m;
}

}  // namespace

DiscreteMeasure explicit_measure(const std::vector<std::vector<double>>& atoms,
                                 std::vector<double> weights, OverlapGrid grid) {
  return checked_measure(MeasureKind::explicit_atoms, atoms, std::move(weights),
                         std::move(grid));
}

DiscreteMeasure adversarial_measure(std::uint64_t seed) {
  constexpr std::array<std::array<double, 3>, 3> gram{{
      {1.0, 0.7, 0.7},
      {0.7, 1.0, 0.3},
      {0.7, 0.3, 1.0},
  }};
  // Cholesky rows are atoms with the prescribed Gram.
  std::vector<std::vector<double>> atoms(3, std::vector<double>(3, 0.0));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = gram[i][j];
      for (int k = 0; k < j; ++k) s -= atoms[i][k] * atoms[j][k];
      atoms[i][j] = (i == j) ? std::sqrt(s) : s / atoms[j][j];
    }
  }
  Rng rng(seed);
  std::array<double, 3> v{rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5};
  const double vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
  for (auto& a : atoms) {
    const double proj = 2.0 * (a[0] * v[0] + a[1] * v[1] + a[2] * v[2]) / vv;
    for (int k = 0; k < 3; ++k) a[k] -= proj * v[k];
  }
  return checked_measure(MeasureKind::adversarial, atoms, {1.0 / 3, 1.0 / 3, 1.0 / 3},
                         OverlapGrid::on_sphere({0.3, 0.7, 1.0}));
}

nlohmann::json to_json(const DiscreteMeasure& measure) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : measure.atoms()) {
    std::vector<double> dense(measure.dimension(), 0.0);
    for (std::size_t i = 0; i < a.index.size(); ++i) dense[a.index[i]] = a.value[i];
    atoms.push_back(std::move(dense));
  }
  return {{"kind", to_string(measure.kind())},
          {"grid", to_json(measure.grid())},
          {"weights", measure.weights()},
          {"atoms", std::move(atoms)}};
}

DiscreteMeasure measure_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.value("kind", std::string("explicit"));
    MeasureKind k = MeasureKind::explicit_atoms;
    if (kind == "tree") {
      k = MeasureKind::tree;
    } else if (kind == "adversarial") {
      k = MeasureKind::adversarial;
    } else if (kind != "explicit") {
      throw Error(Errc::parse_error, "unknown measure kind '" + kind + "'");
    }
    return checked_measure(k, j.at("atoms").get<std::vector<std::vector<double>>>(),
                           j.at("weights").get<std::vector<double>>(),
                           grid_from_json(j.at("grid")));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("measure: ") + e.what());
  }
}

}  // namespace overlap_lab
