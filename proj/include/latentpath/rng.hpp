#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace latentpath {

// splitmix64; used to derive independent sub-seeds from (seed, tags...) so
// that every component of a run owns its own stream regardless of execution
// order or thread placement.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_seed(std::uint64_t seed) { return mix_seed(seed); }

template <typename... Rest>
std::uint64_t hash_seed(std::uint64_t seed, std::uint64_t first, Rest... rest) {
  return hash_seed(mix_seed(seed ^ mix_seed(first)), rest...);
}

// Deterministic RNG: mt19937_64 (engine output is pinned by the standard)
// with hand-rolled draws, so streams are bit-stable across platforms and
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform index in [0, n); unbiased via rejection.
  std::size_t next_index(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % n);
  }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[next_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace latentpath
