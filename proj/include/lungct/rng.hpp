#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace lungct {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based generator: the whole state is (seed, position), so any
/// stream can be reconstructed or forked without sharing mutable state.
/// Draws are defined bit-for-bit here rather than through <random>
/// distributions, whose output is implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t position = 0) noexcept
      : seed_(seed), key_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)), position_(position) {}

  /// Independent sub-stream for (seed, a, b), e.g. (global seed, epoch, record index).
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
    return Rng(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b + 0x3c6ef372fe94f82bULL)));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return position_; }

  std::uint64_t next_u64() noexcept { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * position_++); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  template <class T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t position_;
};

} // namespace lungct
