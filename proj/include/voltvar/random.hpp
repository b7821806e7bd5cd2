#pragma once

#include <cstdint>
#include <algorithm>
#include <numeric>
#include <utility>
#include <random>
#include <vector>

namespace voltvar {

/// Seeded stream with a platform-independent mapping to doubles and indices.
///
/// std::mt19937_64's output sequence is fixed by the standard; the standard
/// distributions are not, so the mappings below are done by hand:
///   uniform01  = (x >> 11) * 2^-53, in [0, 1)
///   below(m)   = rejection sampling on the top bits, in [0, m)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi]; returns lo exactly when lo == hi.
  double uniform(double lo, double hi) {
    if (lo == hi) return lo;
    return lo + (hi - lo) * uniform01();
  }

  std::uint64_t below(std::uint64_t m) {
    if (m <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % m);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % m;
  }

  /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k && i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(std::min(k, n));
    return pool;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace voltvar
