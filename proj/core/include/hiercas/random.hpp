#pragma once

// Portable deterministic randomness helpers. The standard distributions are
// implementation-defined, so everything that must reproduce bit-exactly goes
// through these instead.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace hiercas {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Uniform integer in [0, n) by rejection; n must be positive.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

/// Uniform real in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform real in (0, 1].
inline double uniform01_open_low(Rng& rng) { return 1.0 - uniform01(rng); }

inline double exponential(Rng& rng, double rate) {
  return -std::log(uniform01_open_low(rng)) / rate;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller; one draw per call keeps the stream position simple.
  const double u1 = uniform01_open_low(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Poisson draw by inversion for small means, normal-free product method
/// split into chunks for large means.
inline std::uint64_t poisson(Rng& rng, double mean) {
  std::uint64_t count = 0;
  while (mean > 30.0) {
    // Sum of independent Poissons: peel off chunks to keep exp() in range.
    const double chunk = 30.0;
    double p = 1.0;
    const double limit = std::exp(-chunk);
    for (;;) {
      p *= uniform01(rng);
      if (p <= limit) break;
      ++count;
    }
    mean -= chunk;
  }
  double p = 1.0;
  const double limit = std::exp(-mean);
  for (;;) {
    p *= uniform01(rng);
    if (p <= limit) break;
    ++count;
  }
  return count;
}

}  // namespace hiercas
