#include "sattn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sattn/rng.hpp"

namespace sattn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Below this the stabilized denominator has lost too much range to trust.
constexpr double kUnderflowFloor = 1e-250;

std::size_t expected_count(Mechanism kind) {
  switch (kind) {
  case Mechanism::Standard: return 3;
  case Mechanism::Triangular: return 4;
  case Mechanism::ThirdOrder:
  case Mechanism::Strassen: return 5;
  }
  return 0;
}

void require_kind(const AttentionParams& p, Mechanism kind, const char* op) {
  if (p.kind != kind) throw std::invalid_argument(std::string(op) + ": wrong mechanism kind");
  p.validate();
}

void require_tokens(const Matrix& x, const AttentionParams& p, const char* op) {
  if (x.rows() == 0) throw std::invalid_argument(std::string(op) + ": empty input");
  if (x.cols() != p.input_dim()) throw ShapeError(std::string(op) + ": token dimension does not match projections");
}

void require_mask(KeyMask blocked, std::size_t n, const char* op) {
  if (!blocked.empty() && blocked.size() != n) throw ShapeError(std::string(op) + ": key mask length mismatch");
}

bool is_blocked(KeyMask blocked, std::size_t t) { return !blocked.empty() && blocked[t] != 0; }

Matrix project(const Matrix& x, const Matrix& w) { return matmul_transposed(x, w); }

std::size_t grid_side(std::size_t n) {
  auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  while (m * m > n) --m;
  while ((m + 1) * (m + 1) <= n) ++m;
  if (m * m != n) throw ShapeError("triangular_attention: token count is not a perfect square");
  return m;
}

// Direct evaluation of one Strassen query row from log-score factors.
// lx: 1 x n row i of s*F G^T; ly: s*G H^T; lzt: s*F H^T so that the third
// term for (k, i) is lzt(i, k).
void strassen_row(std::size_t i, const Matrix& lx, const Matrix& ly, const Matrix& lzt, const Matrix& v1,
                  const Matrix& v2, KeyMask blocked, std::span<double> out) {
  const std::size_t n = ly.rows();
  const std::size_t c = v1.cols();
  double mx = kNegInf;
  for (std::size_t j = 0; j < n; ++j) {
    if (is_blocked(blocked, j)) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (is_blocked(blocked, k)) continue;
      mx = std::max(mx, lx(i, j) + ly(j, k) + lzt(i, k));
    }
  }
  if (mx == kNegInf) throw std::invalid_argument("strassen_attention: every pair is masked");
  std::fill(out.begin(), out.end(), 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (is_blocked(blocked, j)) continue;
    for (std::size_t k = 0; k < n; ++k) {
      if (is_blocked(blocked, k)) continue;
      const double w = std::exp(lx(i, j) + ly(j, k) + lzt(i, k) - mx);
      if (w == 0.0) continue;
      total += w;
      for (std::size_t ch = 0; ch < c; ++ch) out[ch] += w * v1(j, ch) * v2(k, ch);
    }
  }
  for (double& v : out) v /= total;
}

struct StrassenFactors {
  Matrix lx, ly, lzt, v1, v2;
};

StrassenFactors strassen_factors(const Matrix& x, const AttentionParams& p) {
  const double s = p.effective_scale();
  const Matrix f = project(x, p.weights[0]);
  const Matrix g = project(x, p.weights[1]);
  const Matrix h = project(x, p.weights[2]);
  return {scaled(matmul_transposed(f, g), s), scaled(matmul_transposed(g, h), s),
          scaled(matmul_transposed(f, h), s), project(x, p.weights[3]), project(x, p.weights[4])};
}

} // namespace

const char* mechanism_name(Mechanism m) noexcept {
  switch (m) {
  case Mechanism::Standard: return "standard";
  case Mechanism::Triangular: return "triangular";
  case Mechanism::ThirdOrder: return "third_order";
  case Mechanism::Strassen: return "strassen";
  }
  return "unknown";
}

std::optional<Mechanism> parse_mechanism(const std::string& name) {
  if (name == "standard") return Mechanism::Standard;
  if (name == "triangular") return Mechanism::Triangular;
  if (name == "third_order" || name == "thirdorder" || name == "third-order") return Mechanism::ThirdOrder;
  if (name == "strassen") return Mechanism::Strassen;
  return std::nullopt;
}

AttentionParams AttentionParams::standard(Matrix wq, Matrix wk, Matrix wv, std::optional<double> scale) {
  AttentionParams p{Mechanism::Standard, {std::move(wq), std::move(wk), std::move(wv)}, scale};
  p.validate();
  return p;
}

AttentionParams AttentionParams::triangular(Matrix wq, Matrix wk, Matrix v1, Matrix v2, std::optional<double> scale) {
  AttentionParams p{Mechanism::Triangular, {std::move(wq), std::move(wk), std::move(v1), std::move(v2)}, scale};
  p.validate();
  return p;
}

AttentionParams AttentionParams::third_order(Matrix wq, Matrix wk1, Matrix wk2, Matrix v1, Matrix v2,
                                             std::optional<double> scale) {
  AttentionParams p{Mechanism::ThirdOrder,
                    {std::move(wq), std::move(wk1), std::move(wk2), std::move(v1), std::move(v2)},
                    scale};
  p.validate();
  return p;
}

AttentionParams AttentionParams::strassen(Matrix wf, Matrix wg, Matrix wh, Matrix v1, Matrix v2,
                                          std::optional<double> scale) {
  AttentionParams p{Mechanism::Strassen,
                    {std::move(wf), std::move(wg), std::move(wh), std::move(v1), std::move(v2)},
                    scale};
  p.validate();
  return p;
}

AttentionParams AttentionParams::random(Mechanism kind, std::size_t input_dim, std::size_t proj_dim, double bound,
                                        RngStream& rng) {
  AttentionParams p;
  p.kind = kind;
  for (std::size_t w = 0; w < expected_count(kind); ++w) {
    Matrix m(proj_dim, input_dim);
    for (double& v : m.data()) v = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(m));
  }
  p.validate();
  return p;
}

std::size_t AttentionParams::input_dim() const {
  if (weights.empty()) throw ShapeError("AttentionParams: no weights");
  return weights.front().cols();
}

std::size_t AttentionParams::output_dim() const {
  if (weights.empty()) throw ShapeError("AttentionParams: no weights");
  return weights.back().rows();
}

double AttentionParams::effective_scale() const {
  if (scale) return *scale;
  return 1.0 / std::sqrt(static_cast<double>(output_dim()));
}

void AttentionParams::validate() const {
  if (weights.size() != expected_count(kind)) {
    throw ShapeError(std::string("AttentionParams: ") + mechanism_name(kind) + " expects " +
                     std::to_string(expected_count(kind)) + " matrices");
  }
  const std::size_t in = weights.front().cols();
  const std::size_t out = weights.front().rows();
  if (in == 0 || out == 0) throw ShapeError("AttentionParams: empty projection");
  for (const Matrix& w : weights) {
    if (w.cols() != in) throw ShapeError("AttentionParams: projections disagree on input dimension");
    if (w.rows() != out) throw ShapeError("AttentionParams: projections disagree on output dimension");
  }
}

Matrix standard_attention(const Matrix& x, const AttentionParams& p, PairMask blocked) {
  require_kind(p, Mechanism::Standard, "standard_attention");
  require_tokens(x, p, "standard_attention");
  const std::size_t n = x.rows();
  if (!blocked.empty() && blocked.size() != n * n) throw ShapeError("standard_attention: mask must be n x n");
  const Matrix q = project(x, p.weights[0]);
  const Matrix k = project(x, p.weights[1]);
  const Matrix v = project(x, p.weights[2]);
  const double s = p.effective_scale();
  Matrix out(n, v.cols());
  Vector scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool off = !blocked.empty() && blocked[i * n + j] != 0;
      scores[j] = off ? kNegInf : dot(q.row(i), k.row(j)) * s;
    }
    const Vector w = stable_softmax(scores);
    auto o = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (w[j] == 0.0) continue;
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += w[j] * v(j, c);
    }
  }
  return out;
}

Matrix standard_attention_keys(const Matrix& x, const AttentionParams& p, KeyMask blocked) {
  const std::size_t n = x.rows();
  require_mask(blocked, n, "standard_attention");
  if (blocked.empty()) return standard_attention(x, p);
  std::vector<std::uint8_t> full(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) full[i * n + j] = blocked[j];
  return standard_attention(x, p, full);
}

Matrix triangular_attention(const Matrix& x, const AttentionParams& p, KeyMask blocked) {
  require_kind(p, Mechanism::Triangular, "triangular_attention");
  require_tokens(x, p, "triangular_attention");
  const std::size_t m = grid_side(x.rows());
  require_mask(blocked, x.rows(), "triangular_attention");
  const Matrix q = project(x, p.weights[0]);
  const Matrix k = project(x, p.weights[1]);
  const Matrix v1 = project(x, p.weights[2]);
  const Matrix v2 = project(x, p.weights[3]);
  const double s = p.effective_scale();
  Matrix out(x.rows(), v1.cols());
  Vector scores(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t l = 0; l < m; ++l) {
        const bool off = is_blocked(blocked, i * m + l) || is_blocked(blocked, l * m + j);
        scores[l] = off ? kNegInf : dot(q.row(i * m + l), k.row(l * m + j)) * s;
      }
      const Vector w = stable_softmax(scores);
      auto o = out.row(i * m + j);
      for (std::size_t l = 0; l < m; ++l) {
        if (w[l] == 0.0) continue;
        for (std::size_t c = 0; c < o.size(); ++c) o[c] += w[l] * v1(i * m + l, c) * v2(l * m + j, c);
      }
    }
  }
  return out;
}

Matrix pair_scores(const Matrix& x, const AttentionParams& p) {
  p.validate();
  require_tokens(x, p, "pair_scores");
  const std::size_t n = x.rows();
  const double s = p.effective_scale();
  Matrix out(n, n * n);
  if (p.kind == Mechanism::ThirdOrder) {
    const Matrix q = project(x, p.weights[0]);
    const Matrix k1 = project(x, p.weights[1]);
    const Matrix k2 = project(x, p.weights[2]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) {
          double acc = 0.0;
          for (std::size_t c = 0; c < q.cols(); ++c) acc += q(i, c) * k1(j, c) * k2(l, c);
          out(i, j * n + l) = acc * s;
        }
    return out;
  }
  if (p.kind == Mechanism::Strassen) {
    const StrassenFactors fx = strassen_factors(x, p);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) out(i, j * n + k) = fx.lx(i, j) + fx.ly(j, k) + fx.lzt(i, k);
    return out;
  }
  throw std::invalid_argument("pair_scores: only third-order and Strassen heads score pairs");
}

Matrix third_order_attention(const Matrix& x, const AttentionParams& p, KeyMask blocked) {
  require_kind(p, Mechanism::ThirdOrder, "third_order_attention");
  require_tokens(x, p, "third_order_attention");
  const std::size_t n = x.rows();
  require_mask(blocked, n, "third_order_attention");
  const Matrix scores = pair_scores(x, p);
  const Matrix v1 = project(x, p.weights[3]);
  const Matrix v2 = project(x, p.weights[4]);
  Matrix out(n, v1.cols());
  Vector row(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l) {
        const bool off = is_blocked(blocked, j) || is_blocked(blocked, l);
        row[j * n + l] = off ? kNegInf : scores(i, j * n + l);
      }
    const Vector w = stable_softmax(row);
    auto o = out.row(i);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l) {
        const double wt = w[j * n + l];
        if (wt == 0.0) continue;
        for (std::size_t c = 0; c < o.size(); ++c) o[c] += wt * v1(j, c) * v2(l, c);
      }
  }
  return out;
}

Matrix strassen_attention_naive(const Matrix& x, const AttentionParams& p, KeyMask blocked) {
  require_kind(p, Mechanism::Strassen, "strassen_attention");
  require_tokens(x, p, "strassen_attention");
  require_mask(blocked, x.rows(), "strassen_attention");
  const StrassenFactors fx = strassen_factors(x, p);
  Matrix out(x.rows(), fx.v1.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) strassen_row(i, fx.lx, fx.ly, fx.lzt, fx.v1, fx.v2, blocked, out.row(i));
  return out;
}

namespace {

// Numerators and denominators of (X D1 Y D2 Z)_ii for every channel, from
// one product P = Y [D2_1 Z | ... | D2_c Z | Z].
void triple_products(const Matrix& x, const Matrix& y, const Matrix& z, const Matrix& v1, const Matrix& v2,
                     std::size_t cutoff, Matrix& num, Vector& den) {
  // One square product Y * (diag(v2[:,ch]) Z) per channel, the last one for
  // the denominator. The diagonal of X diag(v1[:,ch]) P is then read row by
  // row against X^T, which keeps every pass contiguous.
  const std::size_t n = y.rows();
  const std::size_t c = v1.cols();
  const Matrix xt = x.transposed();
  num = Matrix(n, c);
  den.assign(n, 0.0);
  Matrix zc(n, n);
  Vector acc(n);
  for (std::size_t ch = 0; ch <= c; ++ch) {
    for (std::size_t k = 0; k < n; ++k) {
      const double w = ch < c ? v2(k, ch) : 1.0;
      auto src = z.row(k);
      auto dst = zc.row(k);
      for (std::size_t i = 0; i < n; ++i) dst[i] = w * src[i];
    }
    const Matrix prod = strassen_matmul(y, zc, cutoff);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double w = ch < c ? v1(j, ch) : 1.0;
      if (w == 0.0) continue;
      auto xr = xt.row(j);
      auto pr = prod.row(j);
      for (std::size_t i = 0; i < n; ++i) acc[i] += w * xr[i] * pr[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (ch < c)
        num(i, ch) = acc[i];
      else
        den[i] = acc[i];
    }
  }
}

} // namespace

Matrix triple_product_attention(const Matrix& x, const Matrix& y, const Matrix& z, const Matrix& v1,
                                const Matrix& v2, std::size_t cutoff) {
  const std::size_t n = y.rows();
  for (const Matrix* m : {&x, &y, &z}) {
    if (m->rows() != n || m->cols() != n) throw ShapeError("triple_product_attention: X, Y, Z must be n x n");
  }
  if (v1.rows() != n || v2.rows() != n || v1.cols() != v2.cols())
    throw ShapeError("triple_product_attention: value shapes");
  Matrix num;
  Vector den;
  triple_products(x, y, z, v1, v2, cutoff, num, den);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(den[i] > 0.0)) throw std::invalid_argument("triple_product_attention: zero denominator");
    for (std::size_t ch = 0; ch < num.cols(); ++ch) num(i, ch) /= den[i];
  }
  return num;
}

Matrix strassen_attention_fast(const Matrix& x, const AttentionParams& p, KeyMask blocked, FastPathStats* stats,
                               std::size_t cutoff) {
  require_kind(p, Mechanism::Strassen, "strassen_attention");
  require_tokens(x, p, "strassen_attention");
  const std::size_t n = x.rows();
  require_mask(blocked, n, "strassen_attention");
  const StrassenFactors fx = strassen_factors(x, p);

  bool any_open = false;
  for (std::size_t t = 0; t < n; ++t) any_open = any_open || !is_blocked(blocked, t);
  if (!any_open) throw std::invalid_argument("strassen_attention: every pair is masked");

  // Y_jk = exp(ly_jk - r_j), Z_ki = exp(lz_ki - b_i),
  // X_ij = exp(lx_ij + r_j - a_i). The r_j cancel inside X Y and the a_i, b_i
  // are per-row factors that cancel in the ratio.
  Vector r(n, kNegInf);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      if (!is_blocked(blocked, k)) r[j] = std::max(r[j], fx.ly(j, k));
    }
  Matrix y(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) y(j, k) = is_blocked(blocked, k) ? 0.0 : std::exp(fx.ly(j, k) - r[j]);

  Matrix z(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double b = kNegInf;
    for (std::size_t k = 0; k < n; ++k) {
      if (!is_blocked(blocked, k)) b = std::max(b, fx.lzt(i, k));
    }
    for (std::size_t k = 0; k < n; ++k) z(k, i) = is_blocked(blocked, k) ? 0.0 : std::exp(fx.lzt(i, k) - b);
  }

  Matrix xm(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double a = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      if (!is_blocked(blocked, j)) a = std::max(a, fx.lx(i, j) + r[j]);
    }
    for (std::size_t j = 0; j < n; ++j)
      xm(i, j) = is_blocked(blocked, j) ? 0.0 : std::exp(fx.lx(i, j) + r[j] - a);
  }

  Matrix num;
  Vector den;
  triple_products(xm, y, z, fx.v1, fx.v2, cutoff, num, den);
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(den[i] >= kUnderflowFloor) || !std::isfinite(den[i])) {
      strassen_row(i, fx.lx, fx.ly, fx.lzt, fx.v1, fx.v2, blocked, num.row(i));
      ++fallbacks;
      continue;
    }
    for (std::size_t ch = 0; ch < num.cols(); ++ch) num(i, ch) /= den[i];
  }
  if (stats != nullptr) stats->fallback_rows = fallbacks;
  return num;
}

Matrix attention(const Matrix& x, const AttentionParams& p, KeyMask blocked, StrassenPath path) {
  switch (p.kind) {
  case Mechanism::Standard: return standard_attention_keys(x, p, blocked);
  case Mechanism::Triangular: return triangular_attention(x, p, blocked);
  case Mechanism::ThirdOrder: return third_order_attention(x, p, blocked);
  case Mechanism::Strassen:
    return path == StrassenPath::Fast ? strassen_attention_fast(x, p, blocked) : strassen_attention_naive(x, p, blocked);
  }
  throw std::invalid_argument("attention: unknown mechanism");
}

Vector SplitDecomposition::recombine() const {
  const double total = lambda + mu + nu;
  Vector out(gamma.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = (alpha[c] + beta[c] + gamma[c]) / total;
  return out;
}

SplitDecomposition split_decompose(const Matrix& x, const AttentionParams& p, std::span<const std::size_t> positions) {
  require_kind(p, Mechanism::Standard, "split_decompose");
  require_tokens(x, p, "split_decompose");
  const std::size_t aux = x.rows() - 1;
  std::vector<std::uint8_t> in_a(aux, 0);
  for (std::size_t t : positions) {
    if (t == aux) throw std::invalid_argument("split_decompose: position set contains the auxiliary token");
    if (t > aux) throw std::out_of_range("split_decompose: position out of range");
    in_a[t] = 1;
  }
  const Matrix q = project(x, p.weights[0]);
  const Matrix k = project(x, p.weights[1]);
  const Matrix v = project(x, p.weights[2]);
  const double s = p.effective_scale();

  Vector scores(x.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) scores[t] = dot(q.row(aux), k.row(t)) * s;

  SplitDecomposition d;
  d.shift = *std::max_element(scores.begin(), scores.end());
  d.alpha.assign(v.cols(), 0.0);
  d.beta.assign(v.cols(), 0.0);
  d.gamma.assign(v.cols(), 0.0);
  for (std::size_t t = 0; t < aux; ++t) if (in_a[t]) d.positions.push_back(t);

  for (std::size_t t = 0; t <= aux; ++t) {
    const double w = std::exp(scores[t] - d.shift);
    Vector& acc = t == aux ? d.gamma : (in_a[t] ? d.alpha : d.beta);
    double& total = t == aux ? d.nu : (in_a[t] ? d.lambda : d.mu);
    total += w;
    for (std::size_t c = 0; c < v.cols(); ++c) acc[c] += w * v(t, c);
  }
  return d;
}

} // namespace sattn
