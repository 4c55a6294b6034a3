#include "overlap_lab/estimation.hpp"

#include <algorithm>
#include <cmath>

#include "overlap_lab/errors.hpp"
#include "overlap_lab/parallel.hpp"
#include "overlap_lab/rng.hpp"

namespace overlap_lab {

bool enumeration_feasible(const Model& model, int tuple_size) {
  const auto& m = model.frozen_measure();
  return m && std::pow(static_cast<double>(m->size()), tuple_size) <= kMaxEnumeratedTuples;
}

MomentTable::MomentTable(std::size_t dim, std::size_t rows, bool exact)
    : dim_(dim), rows_(rows), exact_(exact), data_(dim * rows, 0.0) {}

double MomentTable::mean(std::size_t c) const {
  double s = 0.0;
  for (std::size_t r = 0; r < rows_; ++r) s += data_[r * dim_ + c];
  return s / static_cast<double>(rows_);
}

double MomentTable::linear_se(std::span<const std::size_t> cols,
                              std::span<const double> coef) const {
  if (exact_ || rows_ < 2) return 0.0;
  std::vector<double> lin(rows_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t i = 0; i < cols.size(); ++i) lin[r] += coef[i] * data_[r * dim_ + cols[i]];
  }
  double mean = 0.0;
  for (double x : lin) mean += x;
  mean /= static_cast<double>(rows_);
  double ss = 0.0;
  for (double x : lin) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(rows_ - 1);
  return std::sqrt(var / static_cast<double>(rows_));
}

MomentTable collect_moments(const Model& model, int tuple_size, std::size_t dim,
                            const TupleKernel& kernel, const EstimationSettings& settings,
                            std::uint64_t seed) {
  if (tuple_size < 1) throw Error(Errc::invalid_argument, "tuple size must be >= 1");
  if (settings.backend == Backend::enumeration) {
    if (!model.is_frozen()) {
      throw Error(Errc::too_large, "enumeration needs a frozen measure");
    }
    MomentTable table(dim, 1, true);
    auto row = table.row(0);
    std::vector<double> out(dim);
    std::size_t visited = 0;
    enumerate_tuples(*model.frozen_measure(), tuple_size,
                     [&](const LevelView& v, std::span<const std::size_t> atoms, double p) {
                       std::fill(out.begin(), out.end(), 0.0);
                       kernel(v, atoms, out);
                       for (std::size_t c = 0; c < dim; ++c) row[c] += p * out[c];
                       ++visited;
                     });
    table.set_inner_samples(visited);
    return table;
  }

  const std::size_t outer = settings.mc.outer;
  const std::size_t inner = settings.mc.inner;
  if (outer < 1 || inner < 1) throw Error(Errc::invalid_argument, "sample sizes must be >= 1");
  MomentTable table(dim, outer, false);
  const int n = tuple_size;
  parallel_for(outer, settings.jobs, [&](std::size_t i) {
    const auto measure = model.draw(derive_seed(seed, {i, 0}));
    Rng rng(derive_seed(seed, {i, 1}));
    std::vector<std::size_t> atoms(n);
    std::vector<Level> entries(static_cast<std::size_t>(n) * n, kDiag);
    std::vector<double> out(dim), acc(dim, 0.0);
    for (std::size_t t = 0; t < inner; ++t) {
      for (auto& a : atoms) a = measure->sample_atom(rng);
      for (int r = 0; r < n; ++r) {
        for (int c = r + 1; c < n; ++c) {
          const Level l = measure->pair_level(atoms[r], atoms[c]);
          entries[r * n + c] = l;
          entries[c * n + r] = l;
        }
      }
      std::fill(out.begin(), out.end(), 0.0);
      kernel(LevelView(measure->grid(), n, entries), atoms, out);
      for (std::size_t c = 0; c < dim; ++c) acc[c] += out[c];
    }
    auto row = table.row(i);
    for (std::size_t c = 0; c < dim; ++c) row[c] = acc[c] / static_cast<double>(inner);
  });
  table.set_inner_samples(outer * inner);
  return table;
}

DeltaEstimate delta_method(const MomentTable& table, std::span<const std::size_t> cols,
                           const std::function<double(std::span<const double>)>& g) {
  std::vector<double> mu(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) mu[i] = table.mean(cols[i]);
  DeltaEstimate out;
  out.value = g(mu);
  if (table.exact() || table.rows() < 2) return out;
  std::vector<double> grad(cols.size());
  std::vector<double> x = mu;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const double h = 1e-6 * std::max(std::abs(mu[i]), 1e-3);
    x[i] = mu[i] + h;
    const double up = g(x);
    x[i] = mu[i] - h;
    const double down = g(x);
    x[i] = mu[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  out.se = table.linear_se(cols, grad);
  return out;
}

EstimateReport estimate_expectation(const Ensemble& ensemble, const Statistic& stat, int n,
                                    const EstimationSettings& settings, std::uint64_t seed) {
  const auto table = collect_moments(
      ensemble.model(), n, 2,
      [&](const LevelView& v, std::span<const std::size_t>, std::span<double> out) {
        if (!ensemble.admits(v, n)) return;
        out[0] = stat(v);
        out[1] = 1.0;
      },
      settings, seed);
  EstimateReport report;
  report.inner_samples = table.inner_samples();
  report.outer_samples = table.rows();
  const std::size_t cols[] = {0, 1};
  if (!ensemble.ceiling()) {
    const double one[] = {1.0};
    report.estimate = table.mean(0);
    report.std_error = table.linear_se(std::span(cols, 1), one);
    return report;
  }
  const double rate = table.mean(1);
  if (rate <= 0.0) {
    throw Error(Errc::acceptance_too_low, "no tuple of " + ensemble.id() + " was accepted");
  }
  const auto ratio =
      delta_method(table, cols, [](std::span<const double> m) { return m[0] / m[1]; });
  report.estimate = ratio.value;
  report.std_error = ratio.se;
  report.acceptance_rate = rate;
  return report;
}

std::size_t sample_ensemble(
    const Ensemble& ensemble, int n, Level ceiling, std::size_t count,
    const EstimationSettings& settings, std::uint64_t seed,
    const std::function<void(const LevelView&, std::span<const std::size_t>)>& visit) {
  if (n < 1) throw Error(Errc::invalid_argument, "need n >= 1 replicas");
  const Model& model = ensemble.model();
  const std::size_t inner = std::max<std::size_t>(1, settings.mc.inner);
  const std::size_t budget = std::max<std::size_t>(100, 100 * settings.mc.outer);
  std::vector<std::size_t> atoms(n);
  std::vector<Level> entries(static_cast<std::size_t>(n) * n, kDiag);
  std::size_t emitted = 0;
  for (std::size_t i = 0; i < budget && emitted < count; ++i) {
    const auto measure = model.draw(derive_seed(seed, {i, 0}));
    Rng rng(derive_seed(seed, {i, 1}));
    for (std::size_t t = 0; t < inner && emitted < count; ++t) {
      for (auto& a : atoms) a = measure->sample_atom(rng);
      for (int r = 0; r < n; ++r) {
        for (int c = r + 1; c < n; ++c) {
          const Level l = measure->pair_level(atoms[r], atoms[c]);
          entries[r * n + c] = l;
          entries[c * n + r] = l;
        }
      }
      const LevelView view(measure->grid(), n, entries);
      if (view.max_off_diagonal(n) > ceiling) continue;
      visit(view, atoms);
      ++emitted;
    }
  }
  if (emitted == 0 && count > 0) {
    throw Error(Errc::acceptance_too_low,
                "no tuple with levels <= " + std::to_string(ceiling) + " in " + ensemble.id());
  }
  return emitted;
}

}  // namespace overlap_lab
