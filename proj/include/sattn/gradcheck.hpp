#pragma once

#include <cstddef>
#include <cstdint>

#include "sattn/attention.hpp"

namespace sattn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t points = 0;
  std::size_t entries = 0; // parameter entries checked per point
};

/// Central differences against the tape gradient of sum(C (.) head(X)) with
/// a random weighting C, with respect to X and every head matrix. Entries are
/// a random sign times U[0.5, 1], then the score projections are shrunk until
/// every scaled score lies in [-3, 3]. Triangular heads need a square n.
GradCheckResult gradcheck_attention(Mechanism kind, std::size_t n, std::size_t d, std::size_t points,
                                    std::uint64_t seed, double eps = 1e-5);

/// Same for a whole layer (one head of `kind`, W_O and a two-layer MLP with
/// hidden width 2d) including every parameter. Points with a hidden
/// pre-activation within 1e-3 of the ReLU kink are redrawn.
GradCheckResult gradcheck_layer(Mechanism kind, std::size_t n, std::size_t d, std::size_t points,
                                std::uint64_t seed, double eps = 1e-5);

/// Largest |scaled score| of a head on x.
double max_abs_score(const Matrix& x, const AttentionParams& p);

} // namespace sattn
