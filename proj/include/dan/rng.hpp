#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace dan::rng {

/// SplitMix64 output function; used to derive well-mixed seeds from a base
/// seed plus salts so parallel streams never overlap by construction.
inline std::uint64_t split_mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt_a, std::uint64_t salt_b = 0) {
  return split_mix(split_mix(base + salt_a) + salt_b);
}

using Engine = std::mt19937_64;

/// Uniform draw in [0, 1) built directly from engine output; the mapping is
/// fixed here rather than delegated to std distributions so that streams are
/// reproducible bit for bit independent of the standard library version.
inline double uniform_unit(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Engine& engine, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(engine);
}

/// Standard normal via Box-Muller; draws two uniforms per call.
inline double normal(Engine& engine) {
  const double u1 = 1.0 - uniform_unit(engine);  // (0, 1], keeps the log finite
  const double u2 = uniform_unit(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline double normal(Engine& engine, double mean, double stddev) {
  return mean + stddev * normal(engine);
}

inline std::size_t uniform_index(Engine& engine, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  return static_cast<std::size_t>(engine() % n);
}

/// Fisher-Yates shuffle with an explicit draw rule (see uniform_unit).
template <typename It>
void shuffle(It first, It last, Engine& engine) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = uniform_index(engine, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace dan::rng
