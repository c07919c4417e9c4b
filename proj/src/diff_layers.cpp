#include "sattn/diff_layers.hpp"

#include <cmath>
#include <stdexcept>

namespace sattn::ad {

namespace {

Var project(Var x, Var w) { return matmul(x, transpose(w)); }

bool blocked_at(std::span<const std::uint8_t> blocked, std::size_t t) {
  return !blocked.empty() && blocked[t] != 0;
}

std::size_t grid_side(std::size_t n) {
  std::size_t m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (m * m != n) throw ShapeError("triangular attention: token count is not a perfect square");
  return m;
}

// Keep-mask for an n x n^2 pair softmax.
std::vector<std::uint8_t> pair_keep(std::span<const std::uint8_t> blocked, std::size_t n) {
  if (blocked.empty()) return {};
  std::vector<std::uint8_t> keep(n * n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < n; ++k)
        keep[(i * n + j) * n + k] = !(blocked[j] != 0 || blocked[k] != 0);
  return keep;
}

} // namespace

HeadVars bind_head(Tape& tape, const AttentionParams& p, bool trainable) {
  p.validate();
  HeadVars h;
  h.kind = p.kind;
  h.scale = p.effective_scale();
  for (const Matrix& w : p.weights) h.weights.push_back(trainable ? tape.variable(w) : tape.constant(w));
  return h;
}

Var attention(Var x, const HeadVars& head, std::span<const std::uint8_t> blocked) {
  const std::size_t n = x.tape->value(x).rows();
  if (!blocked.empty() && blocked.size() != n) throw ShapeError("attention: key mask length mismatch");
  const auto& w = head.weights;
  switch (head.kind) {
  case Mechanism::Standard: {
    if (w.size() != 3) throw ShapeError("attention: standard head needs 3 matrices");
    const Var q = project(x, w[0]);
    const Var k = project(x, w[1]);
    const Var v = project(x, w[2]);
    std::vector<std::uint8_t> keep;
    if (!blocked.empty()) {
      keep.resize(n * n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) keep[i * n + j] = !blocked_at(blocked, j);
    }
    const Var p = softmax_rows(scale(matmul(q, transpose(k)), head.scale), std::move(keep));
    return matmul(p, v);
  }
  case Mechanism::Triangular: {
    if (w.size() != 4) throw ShapeError("attention: triangular head needs 4 matrices");
    const std::size_t m = grid_side(n);
    const Var q = project(x, w[0]);
    const Var k = project(x, w[1]);
    std::vector<std::uint8_t> keep;
    if (!blocked.empty()) {
      keep.resize(n * m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          for (std::size_t l = 0; l < m; ++l)
            keep[(i * m + j) * m + l] = !(blocked_at(blocked, i * m + l) || blocked_at(blocked, l * m + j));
    }
    const Var p = softmax_rows(scale(triangular_scores(q, k, m), head.scale), std::move(keep));
    return triangular_mix(p, project(x, w[2]), project(x, w[3]), m);
  }
  case Mechanism::ThirdOrder: {
    if (w.size() != 5) throw ShapeError("attention: third-order head needs 5 matrices");
    const Var q = project(x, w[0]);
    const Var pairs = pair_hadamard(project(x, w[1]), project(x, w[2]));
    const Var p = softmax_rows(scale(matmul(q, transpose(pairs)), head.scale), pair_keep(blocked, n));
    return matmul(p, pair_hadamard(project(x, w[3]), project(x, w[4])));
  }
  case Mechanism::Strassen: {
    if (w.size() != 5) throw ShapeError("attention: Strassen head needs 5 matrices");
    const Var f = project(x, w[0]);
    const Var g = project(x, w[1]);
    const Var h = project(x, w[2]);
    const Var s = pair_sum(matmul(f, transpose(g)), matmul(g, transpose(h)), matmul(h, transpose(f)));
    const Var p = softmax_rows(scale(s, head.scale), pair_keep(blocked, n));
    return matmul(p, pair_hadamard(project(x, w[3]), project(x, w[4])));
  }
  }
  throw std::invalid_argument("attention: unknown mechanism");
}

Var mlp(Var h, std::span<const Var> weights, std::span<const Var> biases, std::span<const Matrix> dropout_masks) {
  if (weights.empty() || weights.size() != biases.size()) throw ShapeError("mlp: weights and biases must pair up");
  if (!dropout_masks.empty() && dropout_masks.size() + 1 != weights.size())
    throw ShapeError("mlp: one dropout mask per hidden layer");
  Var cur = h;
  for (std::size_t t = 0; t < weights.size(); ++t) {
    cur = add_row(project(cur, weights[t]), biases[t]);
    if (t + 1 < weights.size()) {
      cur = relu(cur);
      if (!dropout_masks.empty()) cur = hadamard(cur, h.tape->constant(dropout_masks[t]));
    }
  }
  return cur;
}

Var layer(Var x, const LayerVars& vars, std::span<const std::uint8_t> blocked, std::span<const Matrix> dropout_masks) {
  Var res = x;
  if (!vars.heads.empty()) {
    std::vector<Var> outs;
    outs.reserve(vars.heads.size());
    for (const HeadVars& h : vars.heads) outs.push_back(attention(x, h, blocked));
    const Var cat = outs.size() == 1 ? outs.front() : concat_cols(outs);
    res = add(x, project(cat, vars.wo));
  }
  return mlp(res, vars.mlp_weights, vars.mlp_biases, dropout_masks);
}

} // namespace sattn::ad
