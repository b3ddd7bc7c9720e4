#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sharpfield/common.hpp"

namespace sharpfield {

/// mt19937_64 engine with hand-rolled distributions.  std::*_distribution output
/// is implementation-defined, which would break byte-identical reruns across
/// standard libraries; these are pinned.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t u64() { return eng_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t bounded(std::uint64_t n) {
    std::uint64_t x, r;
    do {
      x = eng_();
      r = x % n;
    } while (x - r > std::uint64_t(-1) - n + 1);
    return r;
  }

  int index(int n) { return static_cast<int>(bounded(static_cast<std::uint64_t>(n))); }

  /// Standard normal via Box-Muller (no spare caching, keeps draw order obvious).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  /// Fisher-Yates; avoids std::shuffle's unpinned integer distribution.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace sharpfield
