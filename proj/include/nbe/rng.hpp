#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace nbe {

// Splittable pseudo-random generator: xoshiro256** seeded from a (seed,
// stream) pair through splitmix64. Anything simulated from Rng(seed, stream)
// is reproducible from those two integers alone, so workers can own
// independent substreams without coordinating.
//
// All distributions are generated with fixed algorithms (no calls into
// <random> distributions) so that byte-identical reproducibility holds across
// standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::uint64_t x = seed;
    x ^= 0x9E3779B97F4A7C15ULL + (stream << 6) + (stream >> 2) + (x << 16);
    for (auto& s : state_) s = splitmix64(x);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  // Independent generator for substream `id` of this generator's stream.
  Rng substream(std::uint64_t id) const {
    return Rng(seed_, combine(stream_, id));
  }

  static std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9E3779B97F4A7C15ULL;
    x ^= splitmix64(b);
    return splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Uniform integer on {lo, ..., hi} inclusive, rejection-corrected.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: hi < lo");
    const std::uint64_t range = std::uint64_t(hi - lo) + 1;
    if (range == 0) return std::int64_t(next_u64());  // full 64-bit span
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return lo + std::int64_t(x % range);
  }

  // Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Unit-rate exponential.
  double exponential() { return -std::log1p(-uniform01()); }

  // Poisson count by accumulating unit-rate arrivals up to `mean`.
  // O(mean) work; fine for the means used here (at most a few thousand).
  std::int64_t poisson(double mean) {
    if (mean < 0) throw std::invalid_argument("Rng::poisson: negative mean");
    if (mean == 0) return 0;
    std::int64_t n = 0;
    double t = exponential();
    while (t <= mean) {
      ++n;
      t += exponential();
    }
    return n;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_, stream_;
  std::uint64_t state_[4];
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace nbe
