#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace irf {

/// Counter-based random stream: output i is a fixed mix of (key, i).
///
/// Every lifetime worker owns one stream, keyed from the run seed and the
/// worker/lifetime ids, so results never depend on execution order.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(mix(key)), counter_(counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    return mix(key_ ^ (0x9e3779b97f4a7c15ULL * ++counter_));
  }

  /// Derives an independent stream for a sub-component.
  CounterRng split(std::uint64_t salt) const {
    return CounterRng(mix(key_ + 0xd1b54a32d192ed03ULL * (salt + 1)));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; bias is below 2^-64 * n and irrelevant here.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = mix(0);
  std::uint64_t counter_ = 0;
};

}  // namespace irf
