#include "sattn/rng.hpp"

#include <numeric>
#include <stdexcept>

namespace sattn {

std::uint64_t RngStream::next_u64() noexcept {
  ++draws_;
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  if (range == 0) return static_cast<std::int64_t>(next_u64()); // full 64-bit range
  const std::uint64_t threshold = (0 - range) % range;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= threshold) return lo + static_cast<std::int64_t>(x % range);
  }
}

double RngStream::uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  shuffle(p);
  return p;
}

} // namespace sattn
