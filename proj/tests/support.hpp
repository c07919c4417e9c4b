#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "sattn/rng.hpp"
#include "sattn/tensor.hpp"

namespace sattn::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

/// max |a - b| / max |b|.
inline double max_relative_diff(const Matrix& a, const Matrix& b) {
  double peak = 0.0;
  for (double v : b.data()) peak = std::max(peak, std::abs(v));
  return max_abs_diff(a, b) / std::max(peak, 1e-300);
}

} // namespace sattn::test
