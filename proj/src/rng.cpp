#include "overlap_lab/rng.hpp"

#include <cmath>

namespace overlap_lab {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master,
                          std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = splitmix64(master ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t label : path) {
    h = splitmix64(h ^ splitmix64(label + 0x3c6ef372fe94f82bULL));
  }
  return h;
}

double Rng::exponential() { return -std::log(uniform()); }

std::uint64_t Rng::below(std::uint64_t n) {
  // Lemire-style rejection keeps the result exactly uniform.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

}  // namespace overlap_lab
