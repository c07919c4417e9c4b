#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sattn/attention.hpp"
#include "sattn/tensor.hpp"

namespace sattn {

/// Token i with symbol s is encoded as position(i) + symbol(s). Positions are
/// 1-based. `symbol` throws std::out_of_range for symbols outside its domain.
struct PositionalEncoding {
  std::size_t d = 0;
  std::function<Vector(std::size_t)> position;
  std::function<Vector(std::int64_t)> symbol;
  std::int64_t aux_symbol = -1;
};

struct TransformerSpec {
  std::size_t d = 0;
  std::vector<AttentionParams> heads;
  /// d x (sum of head output dims).
  Matrix wo;
  MLPParams mlp;
  PositionalEncoding posenc;
  StrassenPath path = StrassenPath::Naive;

  void validate() const;
  /// max{H, d, number of MLP parameters}.
  std::size_t size() const;
};

/// Rows are token encodings. With append_aux the last row encodes the
/// auxiliary symbol at position n + 1.
Matrix encode(std::span<const std::int64_t> word, const TransformerSpec& spec, bool append_aux);

/// x + (concatenated head outputs) * W_O^T, before the MLP.
Matrix residual_stream(const Matrix& x, const TransformerSpec& spec, KeyMask blocked = {});

/// MLP outputs for every token: n x mlp.output_dim().
Matrix forward_full(const Matrix& x, const TransformerSpec& spec, KeyMask blocked = {});

/// First MLP output coordinate per token.
Vector forward(const Matrix& x, const TransformerSpec& spec, KeyMask blocked = {});

/// 1 if y > 0, else 0. sign(0) reads as 0.
int readout_sign(double y);

/// Nearest integer, halves rounded away from zero.
std::int64_t readout_nearest_int(double y);

} // namespace sattn
