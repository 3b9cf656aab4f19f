#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <cmath>

namespace cryoforge {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from a root seed and a path of
/// integers, e.g. derive_key(seed, {stage, instance, level}).
inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t k = mix64(seed);
  for (std::uint64_t p : path) k = mix64(k ^ mix64(p + 0x632be59bd9b4e019ULL));
  return k;
}

// First path element of derive_key for each consumer of randomness.
namespace stream {
inline constexpr std::uint64_t placement = 1;
inline constexpr std::uint64_t orientation = 2;
inline constexpr std::uint64_t tilt_shift = 3;
inline constexpr std::uint64_t tilt_noise = 4;
inline constexpr std::uint64_t jitter = 5;
inline constexpr std::uint64_t noise = 6;
inline constexpr std::uint64_t apt_weights = 7;
inline constexpr std::uint64_t apt_volume = 8;
inline constexpr std::uint64_t gumbel = 9;
}  // namespace stream

/// Counter-based generator: output i is a pure function of (key, i), so a
/// stream can be re-created anywhere without replaying earlier draws.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1).
  double uniform_open() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi) noexcept {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Lemire's multiply-shift; bias below 2^-64 * span is irrelevant here.
    const auto r = static_cast<unsigned __int128>((*this)()) * span;
    return lo + static_cast<long>(r >> 64);
  }

  /// Standard normal draw (Box-Muller, cosine branch). Implemented here
  /// rather than via <random> so streams agree across standard libraries.
  double normal() noexcept {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace cryoforge
