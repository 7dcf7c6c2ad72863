#ifndef KFORGE_RNG_HPP
#define KFORGE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace kforge {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child seed from (master seed, index) for streams that must not
// overlap.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

// Seeded random stream. All distributions are derived from raw 64-bit
// draws with fixed arithmetic, so sequences are reproducible across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Uniform on the open interval (0, 1).
  double uniform() {
    const std::uint64_t bits = engine_();
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via the inverse CDF (kernel in math.hpp).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Standard Gumbel variate.
  double gumbel() { return -std::log(-std::log(uniform())); }

  // Integer in [0, n). n is always small here (shuffles, index picks), so
  // the modulo bias is below 2^-50.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  // Independent stream keyed off this stream's seed. Same (seed, key)
  // always yields the same substream.
  Rng substream(std::uint64_t key) const { return Rng(derive_seed(seed_, key)); }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace kforge

#endif
