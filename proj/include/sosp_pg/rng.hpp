#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sosp_pg {

/// Counter-based generator: the i-th output of a stream is a pure function of
/// (key, i). Streams are derived from (seed, index) pairs, so any worker can
/// reproduce the draws of any trajectory without touching shared state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(mix(key)) {}

  /// Independent stream for item `index` of a run seeded with `seed`.
  static CounterRng derive(std::uint64_t seed, std::uint64_t index) {
    return CounterRng(mix(seed ^ 0x9e3779b97f4a7c15ULL) + mix(index + 0x632be59bd9b4e019ULL));
  }

  CounterRng split(std::uint64_t index) const { return derive(key_, index); }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sosp_pg
