#include "sattn/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sattn {

void TransformerSpec::validate() const {
  if (d == 0) throw ShapeError("TransformerSpec: zero embedding dimension");
  std::size_t concat = 0;
  for (const AttentionParams& h : heads) {
    h.validate();
    if (h.input_dim() != d) throw ShapeError("TransformerSpec: head input dim differs from d");
    concat += h.output_dim();
  }
  if (!heads.empty() && (wo.rows() != d || wo.cols() != concat)) {
    throw ShapeError("TransformerSpec: W_O must be d x " + std::to_string(concat));
  }
  mlp.validate();
  if (mlp.input_dim() != d) throw ShapeError("TransformerSpec: MLP input dim differs from d");
}

std::size_t TransformerSpec::size() const {
  std::size_t params = 0;
  for (const MLPLayer& l : mlp.layers) params += l.weight.size() + l.bias.size();
  return std::max({heads.size(), d, params});
}

Matrix encode(std::span<const std::int64_t> word, const TransformerSpec& spec, bool append_aux) {
  const PositionalEncoding& pe = spec.posenc;
  if (!pe.position || !pe.symbol) throw std::invalid_argument("encode: positional encoding is incomplete");
  const std::size_t n = word.size() + (append_aux ? 1 : 0);
  Matrix out(n, spec.d);
  for (std::size_t t = 0; t < n; ++t) {
    const std::int64_t sym = t < word.size() ? word[t] : pe.aux_symbol;
    const Vector q = pe.position(t + 1);
    const Vector r = pe.symbol(sym);
    if (q.size() != spec.d || r.size() != spec.d) throw ShapeError("encode: encoding width differs from d");
    for (std::size_t c = 0; c < spec.d; ++c) out(t, c) = q[c] + r[c];
  }
  return out;
}

Matrix residual_stream(const Matrix& x, const TransformerSpec& spec, KeyMask blocked) {
  if (x.cols() != spec.d) throw ShapeError("forward: token dimension differs from d");
  Matrix out = x;
  if (spec.heads.empty()) return out;
  std::size_t offset = 0;
  for (const AttentionParams& h : spec.heads) {
    const Matrix a = attention(x, h, blocked, spec.path);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t r = 0; r < spec.d; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) acc += spec.wo(r, offset + c) * a(i, c);
        out(i, r) += acc;
      }
    offset += h.output_dim();
  }
  return out;
}

Matrix forward_full(const Matrix& x, const TransformerSpec& spec, KeyMask blocked) {
  spec.validate();
  const Matrix res = residual_stream(x, spec, blocked);
  Matrix out(res.rows(), spec.mlp.output_dim());
  for (std::size_t i = 0; i < res.rows(); ++i) {
    const Vector y = mlp_eval(spec.mlp, res.row(i));
    std::copy(y.begin(), y.end(), out.row(i).begin());
  }
  return out;
}

Vector forward(const Matrix& x, const TransformerSpec& spec, KeyMask blocked) {
  return forward_full(x, spec, blocked).column_copy(0);
}

int readout_sign(double y) { return y > 0.0 ? 1 : 0; }

std::int64_t readout_nearest_int(double y) { return static_cast<std::int64_t>(std::round(y)); }

} // namespace sattn
