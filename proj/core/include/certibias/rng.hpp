#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace certibias {

// Counter-based random streams. Every draw is a pure function of
// (seed, stream, counter), so results do not depend on thread count or
// evaluation order as long as each logical draw keeps its counter slot.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::uint64_t h = splitmix64(seed ^ 0x1234567890abcdefULL);
  h = splitmix64(h ^ stream);
  return splitmix64(h ^ counter);
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return mix64(seed_, stream_, counter_++); }

  // Uniform in (0, 1]; never 0 so log() stays finite.
  double next_unit() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Box-Muller; consumes two draws per call, no cached spare.
  double next_normal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Unbiased enough for index sampling (bias < 2^-64 per draw).
  std::uint64_t next_index(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

// Deterministic Fisher-Yates permutation of [0, n); independent of the
// platform's std::shuffle implementation.
inline std::vector<int> random_permutation(int n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  CounterRng rng(seed, stream);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

}  // namespace certibias
