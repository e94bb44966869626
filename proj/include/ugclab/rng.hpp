#pragma once

#include <cstdint>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

namespace ugclab {

/// xoshiro256** seeded through SplitMix64.
///
/// Stream splitting: the generator for (seed, stream, index) starts from the
/// SplitMix64 sequence keyed by
///   mix(mix(seed) ^ (stream * 0x9E3779B97F4A7C15)) ^ mix(index + 0xD1B54A32D192ED03)
/// where mix is the SplitMix64 finalizer. Distinct streams or indices give
/// independent generators, so work can be sharded by index and still produce
/// the same bytes on every platform.
class Rng {
 public:
  static constexpr std::string_view kName = "xoshiro256**-splitmix64-v1";
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0);

  std::uint64_t next();
  result_type operator()() { return next(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Unbiased integer in [0, bound); bound must be positive.
  std::uint64_t uniform(std::uint64_t bound);
  /// Double in [0, 1) with 53 random bits.
  double uniform01();
  /// Double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::uint64_t s_[4];
};

}  // namespace ugclab
