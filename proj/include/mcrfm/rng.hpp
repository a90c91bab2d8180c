#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mcrfm {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derive a stream key from a seed and up to three integer tags.
inline constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a = 0,
                                          std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t k = splitmix64(seed ^ 0x6D63726D6Bull);
  k = splitmix64(k ^ a);
  k = splitmix64(k ^ (b * 0xD6E8FEB86659FD93ull));
  k = splitmix64(k ^ (c * 0xA0761D6478BD642Full));
  return k;
}

// Counter-based generator: draw i of stream `key` is a pure function of
// (key, i), so results never depend on a shared global stream. Uniform and
// normal transforms are written out because <random> distributions are not
// bit-reproducible across standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mcrfm
