#pragma once

// Portable random draws on top of std::mt19937_64. The standard distributions
// are implementation-defined, so seeded runs would differ across toolchains.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

namespace das::rng {

/// Uniform integer in [0, n), n > 0.
inline std::uint64_t below(std::mt19937_64& g, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t v;
  do v = g(); while (v >= limit);
  return v % n;
}

/// Uniform real in [0, 1).
inline double unit(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

inline double normal(std::mt19937_64& g) {
  const double u1 = 1.0 - unit(g), u2 = unit(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Fisher-Yates.
template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(g, i)]);
}

}  // namespace das::rng
