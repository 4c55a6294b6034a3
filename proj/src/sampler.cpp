#include "overlap_lab/sampler.hpp"

#include <cmath>
#include <sstream>

#include "overlap_lab/errors.hpp"
#include "overlap_lab/rng.hpp"

namespace overlap_lab {

Model Model::frozen(DiscreteMeasure measure, std::string id) {
  Model m;
  m.id_ = std::move(id);
  m.frozen_ = std::make_shared<const DiscreteMeasure>(std::move(measure));
  m.grid_ = m.frozen_->grid_ptr();
  return m;
}

Model Model::tree(TreeMeasureSpec spec, std::string id) {
  validate_tree_spec(spec);
  Model m;
  m.id_ = std::move(id);
  m.grid_ = std::make_shared<const OverlapGrid>(tree_grid(spec));
  m.tree_ = std::move(spec);
  return m;
}

std::shared_ptr<const DiscreteMeasure> Model::draw(std::uint64_t seed) const {
  if (frozen_) return frozen_;
  TreeMeasureSpec spec = *tree_;
  spec.seed = derive_seed(tree_->seed, {seed});
  return std::make_shared<const DiscreteMeasure>(build_tree_measure(spec));
}

Ensemble::Ensemble(Model model) : model_(std::move(model)), grid_(model_.grid()) {}

Ensemble::Ensemble(Model model, Level ceiling) : model_(std::move(model)) {
  const Level k = model_.grid()->top_level();
  if (ceiling < 1 || ceiling > k) {
    throw Error(Errc::invalid_argument, "ensemble ceiling out of range");
  }
  if (ceiling == k) {
    grid_ = model_.grid();
  } else {
    ceiling_ = ceiling;
    grid_ = std::make_shared<const OverlapGrid>(model_.grid()->truncated(ceiling));
  }
}

std::string Ensemble::id() const {
  if (!ceiling_) return model_.id();
  return model_.id() + "|ceil" + std::to_string(*ceiling_);
}

Ensemble Ensemble::conditioned() const {
  if (top() < 2) throw Error(Errc::grid_too_small, "cannot condition a single-level ensemble");
  return Ensemble(model_, static_cast<Level>(top() - 1));
}

Ensemble Ensemble::capped(Level ceiling) const {
  if (ceiling > top()) throw Error(Errc::invalid_argument, "cap above the current top level");
  return Ensemble(model_, ceiling);
}

Level EventSpec::ceiling(const OverlapGrid& grid, Level top) const {
  if (kind == Kind::distinct) return static_cast<Level>(top - 1);
  if (!q) throw Error(Errc::invalid_argument, "A_{n,q} event needs a threshold q");
  return std::min(top, grid.level_below(*q));
}

std::string EventSpec::describe() const {
  std::ostringstream os;
  if (kind == Kind::distinct) {
    os << "A_" << n;
  } else {
    os << "A_" << n << ",q=" << (q ? *q : std::nan(""));
  }
  return os.str();
}

namespace {

void fill_levels(const DiscreteMeasure& measure, std::span<const std::size_t> atoms,
                 std::vector<Level>& entries) {
  const int n = static_cast<int>(atoms.size());
  for (int i = 0; i < n; ++i) {
    entries[i * n + i] = kDiag;
    for (int j = i + 1; j < n; ++j) {
      const Level l = measure.pair_level(atoms[i], atoms[j]);
      entries[i * n + j] = l;
      entries[j * n + i] = l;
    }
  }
}

}  // namespace

ReplicaDraw draw_replicas(const DiscreteMeasure& measure, int n, std::uint64_t seed) {
  if (n < 1) throw Error(Errc::invalid_argument, "need n >= 1 replicas");
  Rng rng(seed);
  std::vector<std::size_t> atoms(n);
  for (auto& a : atoms) a = measure.sample_atom(rng);
  std::vector<Level> entries(static_cast<std::size_t>(n) * n);
  fill_levels(measure, atoms, entries);
  return {std::move(atoms), LevelMatrix(measure.grid_ptr(), n, std::move(entries))};
}

ConditionalDraw conditional_draw(const DiscreteMeasure& measure, const EventSpec& event,
                                 std::uint64_t seed, std::size_t max_attempts) {
  const int n = event.n;
  if (n < 2) throw Error(Errc::invalid_argument, "conditioning needs n >= 2");
  const Level ceiling = event.ceiling(measure.grid());
  Rng rng(seed);
  std::vector<std::size_t> atoms(n);
  std::vector<Level> entries(static_cast<std::size_t>(n) * n);
  for (std::size_t attempt = 1; attempt <= max_attempts; ++attempt) {
    for (auto& a : atoms) a = measure.sample_atom(rng);
    fill_levels(measure, atoms, entries);
    if (LevelView(measure.grid(), n, entries).max_off_diagonal(n) <= ceiling) {
      return {{atoms, LevelMatrix(measure.grid_ptr(), n, entries)}, attempt};
    }
  }
  throw Error(Errc::acceptance_too_low, event.describe() + " not observed in " +
                                            std::to_string(max_attempts) + " attempts");
}

void enumerate_tuples(
    const DiscreteMeasure& measure, int n,
    const std::function<void(const LevelView&, std::span<const std::size_t>, double)>& visit) {
  if (n < 1) throw Error(Errc::invalid_argument, "need n >= 1 replicas");
  const std::size_t m = measure.size();
  if (std::pow(static_cast<double>(m), n) > kMaxEnumeratedTuples) {
    throw Error(Errc::too_large, std::to_string(m) + "^" + std::to_string(n) +
                                     " tuples exceed the enumeration limit");
  }
  std::vector<Level> table(m * m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) table[a * m + b] = measure.pair_level(a, b);
  }
  const auto& w = measure.weights();
  std::vector<std::size_t> idx(n, 0);
  std::vector<Level> entries(static_cast<std::size_t>(n) * n, kDiag);
  for (;;) {
    double prob = 1.0;
    for (int i = 0; i < n; ++i) {
      prob *= w[idx[i]];
      for (int j = i + 1; j < n; ++j) {
        const Level l = table[idx[i] * m + idx[j]];
        entries[i * n + j] = l;
        entries[j * n + i] = l;
      }
    }
    visit(LevelView(measure.grid(), n, entries), idx, prob);
    int pos = n - 1;
    while (pos >= 0 && ++idx[pos] == m) idx[pos--] = 0;
    if (pos < 0) break;
  }
}

double enumerate_statistic(const DiscreteMeasure& measure, const Statistic& stat, int n,
                           const std::optional<EventSpec>& event) {
  double total = 0.0;
  double mass = 0.0;
  std::optional<Level> ceiling;
  if (event) {
    if (event->n > n) throw Error(Errc::invalid_argument, "event spans more replicas than n");
    ceiling = event->ceiling(measure.grid());
  }
  enumerate_tuples(measure, n, [&](const LevelView& v, std::span<const std::size_t>, double p) {
    if (ceiling && v.max_off_diagonal(event->n) > *ceiling) return;
    mass += p;
    total += p * stat(v);
  });
  if (!event) return total;
  if (mass <= 0.0) throw Error(Errc::event_null, event->describe() + " has zero mass");
  return total / mass;
}

}  // namespace overlap_lab
