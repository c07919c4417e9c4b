#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sattn/attention.hpp"
#include "sattn/autodiff.hpp"

namespace sattn::ad {

/// Tape handles for one head, in AttentionParams weight order.
struct HeadVars {
  Mechanism kind = Mechanism::Standard;
  std::vector<Var> weights;
  double scale = 1.0;
};

struct LayerVars {
  std::vector<HeadVars> heads;
  Var wo;
  std::vector<Var> mlp_weights;
  std::vector<Var> mlp_biases; // 1 x out rows
};

HeadVars bind_head(Tape& tape, const AttentionParams& p, bool trainable);

/// n x d' head output. `blocked` follows the key-mask convention of the
/// forward kernels.
Var attention(Var x, const HeadVars& head, std::span<const std::uint8_t> blocked = {});

/// Affine layers with ReLU between them. When `dropout_masks` is non-empty it
/// holds one scaled keep-mask per hidden activation.
Var mlp(Var h, std::span<const Var> weights, std::span<const Var> biases,
        std::span<const Matrix> dropout_masks = {});

/// Whole layer: MLP(x + concat(heads) W_O^T), n x out.
Var layer(Var x, const LayerVars& vars, std::span<const std::uint8_t> blocked = {},
          std::span<const Matrix> dropout_masks = {});

} // namespace sattn::ad
