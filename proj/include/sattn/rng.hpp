#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace sattn {

/// SplitMix64 stream. Output depends only on the seed and the number of draws,
/// and every derived distribution below uses integer arithmetic or exact
/// power-of-two scaling, so streams are identical across platforms.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) noexcept : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  std::uint64_t next_u64() noexcept;

  /// Uniform integer in [lo, hi] (inclusive), unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() noexcept;

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  /// Independent child stream seeded from this one.
  RngStream split() noexcept { return RngStream(next_u64()); }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Random permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

private:
  std::uint64_t seed_;
  std::uint64_t state_;
  std::uint64_t draws_ = 0;
};

} // namespace sattn
