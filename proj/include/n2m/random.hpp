#ifndef N2M_RANDOM_HPP_
#define N2M_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace n2m {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds from a
// master seed and a counter.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t counter = 0) {
  return mix_seed(mix_seed(master ^ mix_seed(stream)) + counter);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

/// Uniform double in [lo, hi) built from the generator's top 53 bits; the
/// output sequence is identical across standard library implementations.
inline double uniform(Rng &rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

inline std::size_t uniform_index(Rng &rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

/// Standard normal via Box-Muller.
inline double standard_normal(Rng &rng) {
  double u1;
  do {
    u1 = uniform(rng, 0.0, 1.0);
  } while (u1 <= 0.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace n2m

#endif // N2M_RANDOM_HPP_
