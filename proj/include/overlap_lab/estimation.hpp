#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "overlap_lab/sampler.hpp"

namespace overlap_lab {

enum class Backend { monte_carlo, enumeration };

struct McSizes {
  std::size_t outer = 200;  // independent measures
  std::size_t inner = 100;  // replica tuples per measure
};

struct EstimationSettings {
  McSizes mc;
  Backend backend = Backend::monte_carlo;
  int jobs = 1;
};

/// Point estimate of some E<.> with its standard error.
struct EstimateReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t inner_samples = 0;
  std::size_t outer_samples = 0;
  std::optional<double> acceptance_rate;
};

/// Whether the exact tuple sum is available for this model and tuple size.
bool enumeration_feasible(const Model& model, int tuple_size);

/// Per-outer-replication inner means of a vector-valued tuple statistic.
///
/// Rows are the independent observations: inner tuples drawn from one
/// measure are correlated through its weights, so all standard errors are
/// taken across rows. An exact table (from enumeration) has a single row and
/// zero standard errors.
class MomentTable {
 public:
  MomentTable(std::size_t dim, std::size_t rows, bool exact);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t rows() const noexcept { return rows_; }
  bool exact() const noexcept { return exact_; }
  std::size_t inner_samples() const noexcept { return inner_samples_; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * dim_, dim_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * dim_, dim_};
  }
  double mean(std::size_t c) const;

  /// Standard error of the mean of sum_i coef[i] * x[cols[i]].
  double linear_se(std::span<const std::size_t> cols, std::span<const double> coef) const;

  void set_inner_samples(std::size_t n) noexcept { inner_samples_ = n; }

 private:
  std::size_t dim_;
  std::size_t rows_;
  bool exact_;
  std::size_t inner_samples_ = 0;
  std::vector<double> data_;
};

/// Kernel filling `out` (size dim) for one base-model replica tuple.
using TupleKernel =
    std::function<void(const LevelView&, std::span<const std::size_t> atoms, std::span<double> out)>;

/// Runs the kernel over tuple_size-replica tuples. Monte Carlo: outer
/// measures from derive_seed(seed, {i, 0}), inner tuples from
/// derive_seed(seed, {i, 1}); rows are filled by index so the table is
/// independent of the job count. Enumeration: one exact row (frozen
/// models only; throws too_large when infeasible).
MomentTable collect_moments(const Model& model, int tuple_size, std::size_t dim,
                            const TupleKernel& kernel, const EstimationSettings& settings,
                            std::uint64_t seed);

struct DeltaEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// g evaluated at the column means, with a delta-method standard error
/// (gradient by central differences, variance across rows).
DeltaEstimate delta_method(const MomentTable& table, std::span<const std::size_t> cols,
                           const std::function<double(std::span<const double>)>& g);

/// E<stat(R^n)> over the ensemble: a plain mean without a ceiling, else the
/// ratio E<stat I>/E<I> with the acceptance rate E<I>.
EstimateReport estimate_expectation(const Ensemble& ensemble, const Statistic& stat, int n,
                                    const EstimationSettings& settings, std::uint64_t seed);

/// Streams tuples of the ensemble's law restricted to max off-diagonal level
/// <= ceiling: measures are drawn in turn, `settings.mc.inner` tuples per
/// measure, and accepted tuples are emitted until `count` is reached. Pooled
/// across measures, accepted tuples follow E<I(.) I_A>/E<I_A>. Throws
/// acceptance_too_low when nothing is accepted within the draw budget.
std::size_t sample_ensemble(
    const Ensemble& ensemble, int n, Level ceiling, std::size_t count,
    const EstimationSettings& settings, std::uint64_t seed,
    const std::function<void(const LevelView&, std::span<const std::size_t>)>& visit);

}  // namespace overlap_lab
