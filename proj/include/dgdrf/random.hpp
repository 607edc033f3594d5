#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter), so sampling feature j or row i never depends on
// how many draws were made before it.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dgdrf {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Named sub-streams. Fixed values: changing them changes every sampled artifact.
enum class Stream : std::uint64_t {
  feature_weights = 1,
  feature_offsets = 2,
  covariates = 3,
  noise = 4,
  permutation = 5,
  expander = 6,
  target_weights = 7,
  test_covariates = 8,
  test_noise = 9,
};

class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(detail::splitmix64(detail::splitmix64(seed) ^ (stream * 0xd1342543de82ef95ULL))) {}
  constexpr CounterRng(std::uint64_t seed, Stream stream) noexcept
      : CounterRng(seed, static_cast<std::uint64_t>(stream)) {}

  /// Derived generator for a sub-index (e.g. one feature or one row).
  [[nodiscard]] constexpr CounterRng split(std::uint64_t index) const noexcept {
    CounterRng out(0, 0);
    out.key_ = detail::splitmix64(key_ ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
    return out;
  }

  [[nodiscard]] constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return detail::splitmix64(key_ + detail::splitmix64(counter));
  }

  /// Uniform on [0, 1) with 53 random bits.
  [[nodiscard]] double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on counters (2k, 2k+1).
  [[nodiscard]] double normal(std::uint64_t counter) const noexcept {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unbiased integer in [0, bound) by rejection; `counter` is advanced past consumed draws.
  [[nodiscard]] std::uint64_t below(std::uint64_t bound, std::uint64_t& counter) const noexcept {
    const std::uint64_t limit = bound ? (~std::uint64_t{0} - (~std::uint64_t{0} % bound)) : 0;
    for (;;) {
      const std::uint64_t r = bits(counter++);
      if (r < limit) return r % bound;
    }
  }

 private:
  std::uint64_t key_;
};

}  // namespace dgdrf
