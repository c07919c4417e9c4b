#include "sattn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sattn/diff_layers.hpp"
#include "sattn/rng.hpp"

namespace sattn {

namespace {

// Random sign times a magnitude in [0.5, 1]. Entries bounded away from zero
// keep gradient components from collapsing towards the roundoff floor of
// the finite differences.
Matrix uniform(std::size_t r, std::size_t c, RngStream& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.5, 1.0);
  return m;
}

constexpr double kKinkGap = 1e-3;
constexpr std::size_t kMaxDraws = 1000;

// Smallest |pre-activation| of the hidden ReLU layer.
double relu_gap(const Matrix& x, const AttentionParams& head, const Matrix& wo, const Matrix& w1, const Matrix& b1) {
  const Matrix res = add(x, matmul_transposed(attention(x, head), wo));
  const Matrix z = matmul_transposed(res, w1);
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) gap = std::min(gap, std::abs(z(i, j) + b1(0, j)));
  return gap;
}

// Projections entering the score and the degree of the score in them.
std::pair<std::size_t, double> score_weights(Mechanism kind) {
  switch (kind) {
  case Mechanism::Standard: return {2, 2.0};
  case Mechanism::Triangular: return {2, 2.0};
  case Mechanism::ThirdOrder: return {3, 3.0};
  case Mechanism::Strassen: return {3, 2.0};
  }
  return {0, 1.0};
}

AttentionParams random_head(Mechanism kind, const Matrix& x, std::size_t d, RngStream& rng) {
  AttentionParams p = AttentionParams::random(kind, d, d, 1.0, rng);
  const double peak = max_abs_score(x, p);
  if (peak > 3.0) {
    const auto [count, degree] = score_weights(kind);
    const double c = std::pow(3.0 / peak, 1.0 / degree);
    for (std::size_t w = 0; w < count; ++w) p.weights[w] = scaled(p.weights[w], c);
  }
  return p;
}

GradCheckResult run(Mechanism kind, std::size_t n, std::size_t d, std::size_t points, std::uint64_t seed, double eps,
                    bool full_layer) {
  if (n == 0 || d == 0 || points == 0) throw std::invalid_argument("gradcheck: n, d and points must be positive");
  RngStream rng(seed);
  GradCheckResult out;
  for (std::size_t pt = 0; pt < points; ++pt) {
    // Points within kKinkGap of a ReLU kink are redrawn: the central
    // difference straddles the kink there.
    std::vector<Matrix> params;
    AttentionParams head;
    for (std::size_t draw = 0;; ++draw) {
      if (draw == kMaxDraws) throw std::runtime_error("gradcheck: no point away from the ReLU kinks");
      params.clear();
      params.push_back(uniform(n, d, rng));
      head = random_head(kind, params[0], d, rng);
      params.insert(params.end(), head.weights.begin(), head.weights.end());
      if (!full_layer) break;
      params.push_back(uniform(d, d, rng));     // W_O
      params.push_back(uniform(2 * d, d, rng)); // W1
      params.push_back(uniform(1, 2 * d, rng)); // b1
      params.push_back(uniform(1, 2 * d, rng)); // W2
      params.push_back(uniform(1, 1, rng));     // b2
      const std::size_t b = 1 + head.weights.size();
      if (relu_gap(params[0], head, params[b], params[b + 1], params[b + 2]) >= kKinkGap) break;
    }
    const std::size_t head_count = head.weights.size();
    const double head_scale = head.effective_scale();
    const std::size_t out_cols = full_layer ? 1 : d;
    const Matrix weighting = uniform(n, out_cols, rng);

    const ad::ScalarFn f = [&](ad::Tape& tape, std::span<const ad::Var> v) {
      ad::HeadVars hv;
      hv.kind = kind;
      hv.scale = head_scale;
      hv.weights.assign(v.begin() + 1, v.begin() + 1 + static_cast<std::ptrdiff_t>(head_count));
      ad::Var y;
      if (full_layer) {
        ad::LayerVars lv;
        lv.heads.push_back(hv);
        const std::size_t b = 1 + head_count;
        lv.wo = v[b];
        lv.mlp_weights = {v[b + 1], v[b + 3]};
        lv.mlp_biases = {v[b + 2], v[b + 4]};
        y = ad::layer(v[0], lv);
      } else {
        y = ad::attention(v[0], hv);
      }
      return ad::sum(ad::hadamard(y, tape.constant(weighting)));
    };
    out.max_rel_error = std::max(out.max_rel_error, ad::fd_check(f, params, eps));
    out.entries = 0;
    for (const Matrix& p : params) out.entries += p.size();
    ++out.points;
  }
  return out;
}

} // namespace

double max_abs_score(const Matrix& x, const AttentionParams& p) {
  p.validate();
  const double s = p.effective_scale();
  switch (p.kind) {
  case Mechanism::Standard: {
    const Matrix q = matmul_transposed(x, p.weights[0]);
    const Matrix k = matmul_transposed(x, p.weights[1]);
    const Matrix sc = matmul_transposed(q, k);
    double peak = 0.0;
    for (double v : sc.data()) peak = std::max(peak, std::abs(s * v));
    return peak;
  }
  case Mechanism::Triangular: {
    const std::size_t n = x.rows();
    const auto m = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
    if (m * m != n) throw ShapeError("max_abs_score: triangular needs a square token count");
    const Matrix q = matmul_transposed(x, p.weights[0]);
    const Matrix k = matmul_transposed(x, p.weights[1]);
    double peak = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = 0; l < m; ++l) peak = std::max(peak, std::abs(s * dot(q.row(i * m + l), k.row(l * m + j))));
    return peak;
  }
  case Mechanism::ThirdOrder:
  case Mechanism::Strassen: {
    const Matrix sc = pair_scores(x, p);
    double peak = 0.0;
    for (double v : sc.data()) peak = std::max(peak, std::abs(v));
    return peak;
  }
  }
  return 0.0;
}

GradCheckResult gradcheck_attention(Mechanism kind, std::size_t n, std::size_t d, std::size_t points,
                                    std::uint64_t seed, double eps) {
  return run(kind, n, d, points, seed, eps, false);
}

GradCheckResult gradcheck_layer(Mechanism kind, std::size_t n, std::size_t d, std::size_t points,
                                std::uint64_t seed, double eps) {
  return run(kind, n, d, points, seed, eps, true);
}

} // namespace sattn
