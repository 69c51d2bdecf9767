#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter), so results never depend on evaluation order or on
// how work is split across threads.

#include <cstdint>
#include <numeric>
#include <vector>

namespace lyapnet {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Named streams so that unrelated consumers of one seed never overlap.
enum class RngStream : std::uint64_t {
  ConstantFill = 1,
  RandomParams = 2,
  SplitShuffle = 3,
  Init = 4,
  EpochShuffle = 5,
  TangentBasis = 6,
  Test = 99,
};

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept : key_(detail::splitmix64(seed)) {}

  constexpr std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const noexcept {
    std::uint64_t h = detail::splitmix64(key_ ^ detail::splitmix64(stream * 0xD1B54A32D192ED03ULL));
    return detail::splitmix64(h ^ detail::splitmix64(counter + 0x632BE59BD9B4E019ULL));
  }
  std::uint64_t bits(RngStream stream, std::uint64_t counter) const noexcept {
    return bits(static_cast<std::uint64_t>(stream), counter);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  template <typename Stream>
  double uniform(Stream stream, std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(stream, counter) >> 11) * 0x1.0p-53;
  }

  template <typename Stream>
  double uniform(Stream stream, std::uint64_t counter, double lo, double hi) const noexcept {
    return lo + (hi - lo) * uniform(stream, counter);
  }

  /// Integer in [0, n). Multiply-shift reduction; bias is below 2^-32 for the
  /// sizes used here.
  template <typename Stream>
  std::uint64_t below(Stream stream, std::uint64_t counter, std::uint64_t n) const noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits(stream, counter)) * n) >> 64);
  }

  /// Fisher-Yates permutation of [0, n) drawn from `stream`.
  template <typename Stream>
  std::vector<std::size_t> permutation(std::size_t n, Stream stream) const {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(stream, i, i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t key_;
};

/// Stream id mixing a named stream with a sub-index (e.g. an epoch number).
constexpr std::uint64_t substream(RngStream s, std::uint64_t index) noexcept {
  return detail::splitmix64(static_cast<std::uint64_t>(s) * 0x9E3779B97F4A7C15ULL + index);
}

}  // namespace lyapnet
