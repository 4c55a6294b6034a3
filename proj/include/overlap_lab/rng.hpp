#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace overlap_lab {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Derives an independent stream seed from a master seed and a path of
/// labels (outer index, vertex id, check index, ...). The result depends on
/// the full path, never on the order in which streams are requested.
std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> path) noexcept;

/// Thin wrapper over mt19937_64 with portable variate generation (the
/// std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard exponential, strictly positive.
  double exponential();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace overlap_lab
