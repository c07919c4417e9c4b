#include "sattn/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include "sattn/rng.hpp"

namespace sattn {

namespace {

using Terms = std::initializer_list<std::pair<std::size_t, double>>;

void set_row(Matrix& w, std::size_t r, Terms terms, double factor = 1.0) {
  for (const auto& [c, v] : terms) w(r, c) += v * factor;
}

Vector unit_sum(std::size_t d, Terms terms) {
  Vector v(d, 0.0);
  for (const auto& [c, x] : terms) v[c] += x;
  return v;
}

double ipow(double base, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

std::int64_t ipow64(std::int64_t base, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

// Common factor for W^f, W^g, W^h: every pairwise product scales by its
// square, so the guaranteed score gap becomes max(margin*s, target).
double amplification(double margin, double scale, const BuildOptions& opt) {
  const double gap = margin * scale;
  return std::sqrt(std::max(1.0, opt.min_log_margin / gap));
}

void amplify(AttentionParams& p, double c) {
  for (std::size_t w = 0; w < 3; ++w) p.weights[w] = scaled(p.weights[w], c);
}

MLPLayer make_layer(std::size_t out, std::size_t in) { return MLPLayer{Matrix(out, in), Vector(out, 0.0)}; }

std::size_t side_of(const std::vector<std::uint8_t>& cells, std::size_t m, const char* what) {
  if (cells.size() != m * m) throw ShapeError(std::string(what) + ": matrix must hold m*m cells");
  return m;
}

// Decodes grid token t (0-based) into 1-based (row, col).
std::pair<std::int64_t, std::int64_t> cell(std::size_t t, std::size_t m) {
  return {static_cast<std::int64_t>(t / m) + 1, static_cast<std::int64_t>(t % m) + 1};
}

std::int64_t sq(std::int64_t v) { return v * v; }

} // namespace

const char* theory_task_name(TheoryTask t) noexcept {
  switch (t) {
  case TheoryTask::FuncComp: return "funccomp";
  case TheoryTask::BinRel: return "binrel";
  case TheoryTask::Match3: return "match3";
  case TheoryTask::Quotient: return "quotient";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Function composition. Encoding (i, i^2, phi, phi^2, 1, 0, 0).

TransformerSpec build_funccomp(std::size_t n, const BuildOptions& opt) {
  if (n < 1) throw std::invalid_argument("build_funccomp: n must be >= 1");
  constexpr std::size_t d = 7;
  constexpr std::size_t dp = 6;
  const double nn = static_cast<double>(n);

  Matrix wf(dp, d), wg(dp, d), wh(dp, d), v1(dp, d), v2(dp, d);
  set_row(wf, 0, {{3, 1}}, nn);
  set_row(wf, 1, {{2, 2}}, nn);
  set_row(wf, 2, {{4, -1}}, nn);

  set_row(wg, 0, {{4, -1}}, nn);
  set_row(wg, 1, {{0, 1}}, nn);
  set_row(wg, 2, {{1, 1}}, nn);
  set_row(wg, 3, {{3, 1}}, nn);
  set_row(wg, 4, {{2, 2}}, nn);
  set_row(wg, 5, {{4, -1}}, nn);

  set_row(wh, 3, {{4, -1}}, nn);
  set_row(wh, 4, {{0, 1}, {4, -nn}}, nn);
  set_row(wh, 5, {{1, 1}, {0, -2 * nn}, {4, nn * nn}}, nn);

  set_row(v1, 0, {{4, 1}});
  set_row(v2, 0, {{2, 1}});

  const double s = 1.0 / std::sqrt(static_cast<double>(dp));
  AttentionParams head = AttentionParams::strassen(wf, wg, wh, v1, v2, s);
  amplify(head, amplification(nn * nn, s, opt));

  TransformerSpec spec;
  spec.d = d;
  spec.heads.push_back(std::move(head));
  spec.wo = Matrix(d, dp);
  spec.wo(5, 0) = 1.0;
  MLPLayer out = make_layer(1, d);
  out.weight(0, 5) = 1.0;
  spec.mlp.layers.push_back(std::move(out));

  spec.posenc.d = d;
  spec.posenc.position = [](std::size_t i) {
    const double x = static_cast<double>(i);
    return unit_sum(d, {{0, x}, {1, x * x}, {4, 1}});
  };
  spec.posenc.symbol = [n](std::int64_t s) {
    if (s < 1 || s > static_cast<std::int64_t>(n)) throw std::out_of_range("funccomp: symbol outside [1, n]");
    const double v = static_cast<double>(s);
    return unit_sum(d, {{2, v}, {3, v * v}});
  };
  spec.posenc.aux_symbol = 1;
  spec.validate();
  return spec;
}

std::vector<std::int64_t> funccomp_word(const FuncCompInstance& inst) {
  std::vector<std::int64_t> w(inst.g);
  w.insert(w.end(), inst.h.begin(), inst.h.end());
  w.push_back(inst.x);
  return w;
}

std::int64_t funccomp_answer(const FuncCompInstance& inst) {
  const auto n = static_cast<std::int64_t>(inst.g.size());
  if (inst.h.size() != inst.g.size() || inst.x < 1 || inst.x > n) throw std::invalid_argument("funccomp: malformed");
  const std::int64_t gx = inst.g[static_cast<std::size_t>(inst.x - 1)];
  return inst.h[static_cast<std::size_t>(gx - 1)];
}

std::int64_t funccomp_exact_score(const FuncCompInstance& inst, std::size_t i, std::size_t j, std::size_t k) {
  const std::vector<std::int64_t> phi = funccomp_word(inst);
  const auto n = static_cast<std::int64_t>(inst.g.size());
  const auto jj = static_cast<std::int64_t>(j) + 1;
  const auto kk = static_cast<std::int64_t>(k) + 1;
  return -(sq(phi[i] - jj) + sq(phi[j] - (kk - n)));
}

// ---------------------------------------------------------------------------
// Binary relation composition. Encoding (A, B, i, i^2, j, j^2, 1), values go
// to slots 7..12.

TransformerSpec build_binrel(std::size_t m, const BuildOptions& opt) {
  if (m < 1) throw std::invalid_argument("build_binrel: m must be >= 1");
  constexpr std::size_t d = 15;
  constexpr std::size_t dp = 15;
  const double mm = static_cast<double>(m);
  const double big = ipow(mm, 4);

  Matrix wf(dp, d), wg(dp, d), wh(dp, d), v1(dp, d), v2(dp, d);
  set_row(wf, 0, {{3, 1}}, big);
  set_row(wf, 1, {{2, 2}}, big);
  set_row(wf, 2, {{6, -1}}, big);
  set_row(wf, 3, {{5, 1}}, big);
  set_row(wf, 4, {{4, 2}}, big);
  set_row(wf, 5, {{6, -1}}, big);
  set_row(wf, 11, {{6, 1 / ipow(mm, 2)}}, big);
  set_row(wf, 12, {{6, 1 / ipow(mm, 3)}}, big);
  set_row(wf, 13, {{6, 1 / ipow(mm, 4)}}, big);
  set_row(wf, 14, {{6, 1 / ipow(mm, 5)}}, big);

  set_row(wg, 0, {{6, -1}}, big);
  set_row(wg, 1, {{2, 1}}, big);
  set_row(wg, 2, {{3, 1}}, big);
  set_row(wg, 6, {{5, 1}}, big);
  set_row(wg, 7, {{4, 2}}, big);
  set_row(wg, 8, {{6, -1}}, big);
  set_row(wg, 9, {{6, 1}}, big);
  set_row(wg, 10, {{0, 1}}, big);
  set_row(wg, 11, {{2, 1}}, big);
  set_row(wg, 12, {{4, 1}}, big);

  set_row(wh, 3, {{6, -1}}, big);
  set_row(wh, 4, {{4, 1}}, big);
  set_row(wh, 5, {{5, 1}}, big);
  set_row(wh, 6, {{6, -1}}, big);
  set_row(wh, 7, {{2, 1}}, big);
  set_row(wh, 8, {{3, 1}}, big);
  set_row(wh, 9, {{1, 1}}, big);
  set_row(wh, 10, {{6, 1}}, big);
  set_row(wh, 13, {{2, 1}}, big);
  set_row(wh, 14, {{4, 1}}, big);

  // v1 (.) v2 = (c, d, k, l, A_cd, B_kl).
  set_row(v1, 0, {{2, 1}});
  set_row(v1, 1, {{4, 1}});
  set_row(v1, 2, {{6, 1}});
  set_row(v1, 3, {{6, 1}});
  set_row(v1, 4, {{0, 1}});
  set_row(v1, 5, {{6, 1}});
  set_row(v2, 0, {{6, 1}});
  set_row(v2, 1, {{6, 1}});
  set_row(v2, 2, {{2, 1}});
  set_row(v2, 3, {{4, 1}});
  set_row(v2, 4, {{6, 1}});
  set_row(v2, 5, {{1, 1}});

  const double s = 1.0 / std::sqrt(static_cast<double>(dp));
  AttentionParams head = AttentionParams::strassen(wf, wg, wh, v1, v2, s);
  amplify(head, amplification(ipow(mm, 3), s, opt));

  TransformerSpec spec;
  spec.d = d;
  spec.heads.push_back(std::move(head));
  spec.wo = Matrix(d, dp);
  for (std::size_t t = 0; t < 6; ++t) spec.wo(7 + t, t) = 1.0;

  // Slots: i=2, j=4, c=7, d=8, k=9, l=10, A=11, B=12.
  MLPLayer hidden = make_layer(8, d);
  set_row(hidden.weight, 0, {{2, 1}, {7, -1}});
  set_row(hidden.weight, 1, {{2, -1}, {7, 1}});
  set_row(hidden.weight, 2, {{8, 1}, {9, -1}});
  set_row(hidden.weight, 3, {{8, -1}, {9, 1}});
  set_row(hidden.weight, 4, {{10, 1}, {4, -1}});
  set_row(hidden.weight, 5, {{10, -1}, {4, 1}});
  set_row(hidden.weight, 6, {{11, 1}});
  set_row(hidden.weight, 7, {{12, 1}});
  MLPLayer out = make_layer(1, 8);
  for (std::size_t u = 0; u < 6; ++u) out.weight(0, u) = -1.0;
  out.weight(0, 6) = 1.0;
  out.weight(0, 7) = 1.0;
  out.bias[0] = -1.5;
  spec.mlp.layers = {std::move(hidden), std::move(out)};

  spec.posenc.d = d;
  spec.posenc.position = [m](std::size_t t) {
    const auto [i, j] = cell(t - 1, m);
    const double x = static_cast<double>(i), y = static_cast<double>(j);
    return unit_sum(d, {{2, x}, {3, x * x}, {4, y}, {5, y * y}, {6, 1}});
  };
  spec.posenc.symbol = [](std::int64_t s) {
    if (s < 0 || s > 3) throw std::out_of_range("binrel: symbol outside [0, 3]");
    return unit_sum(d, {{0, static_cast<double>(s & 1)}, {1, static_cast<double>((s >> 1) & 1)}});
  };
  spec.posenc.aux_symbol = 0;
  spec.validate();
  return spec;
}

std::vector<std::int64_t> binrel_word(const BinRelInstance& inst) {
  side_of(inst.a, inst.m, "binrel");
  side_of(inst.b, inst.m, "binrel");
  std::vector<std::int64_t> w(inst.m * inst.m);
  for (std::size_t t = 0; t < w.size(); ++t) w[t] = (inst.a[t] ? 1 : 0) + (inst.b[t] ? 2 : 0);
  return w;
}

std::vector<int> binrel_answer(const BinRelInstance& inst) {
  const std::size_t m = inst.m;
  side_of(inst.a, m, "binrel");
  side_of(inst.b, m, "binrel");
  std::vector<int> out(m * m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k)
        if (inst.a[i * m + k] && inst.b[k * m + j]) out[i * m + j] = 1;
  return out;
}

std::int64_t binrel_exact_score(const BinRelInstance& inst, std::size_t q, std::size_t g, std::size_t h) {
  const std::size_t m = inst.m;
  if (m > 40) throw std::invalid_argument("binrel_exact_score: m too large for 64-bit scores");
  const auto mm = static_cast<std::int64_t>(m);
  const auto [i, j] = cell(q, m);
  const auto [c, d] = cell(g, m);
  const auto [k, l] = cell(h, m);
  const std::int64_t integral = -sq(i - c) - sq(d - k) - sq(l - j) + inst.a[g] + inst.b[h];
  return integral * ipow64(mm, 5) + (c * ipow64(mm, 3) + d * mm * mm + k * mm + l);
}

// ---------------------------------------------------------------------------
// Match3. Encoding (i, p, p^2, 1, slots...). Each head centres p on its
// target inside the projections.

TransformerSpec build_match3(std::size_t n, std::int64_t m, bool allow_zero, const BuildOptions& opt) {
  if (n < 1) throw std::invalid_argument("build_match3: n must be >= 1");
  if (m < 2) throw std::invalid_argument("build_match3: modulus must be >= 2");
  std::vector<std::int64_t> targets;
  if (allow_zero) targets.push_back(0);
  targets.push_back(m);
  targets.push_back(2 * m);
  const std::size_t heads = targets.size();
  const std::size_t d = 4 + 2 * heads;
  constexpr std::size_t dp = 8;
  const double nn = static_cast<double>(n);
  const double big = nn * nn;
  const double s = 1.0 / std::sqrt(static_cast<double>(dp));

  TransformerSpec spec;
  spec.d = d;
  spec.wo = Matrix(d, dp * heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const double a = static_cast<double>(targets[hd]) / 3.0;
    Matrix wf(dp, d), wg(dp, d), wh(dp, d), v1(dp, d), v2(dp, d);
    const Terms q = {{1, 1}, {3, -a}};
    const Terms q2 = {{2, 1}, {1, -2 * a}, {3, a * a}};
    set_row(wf, 0, q, -big);
    set_row(wf, 1, q, -big);
    set_row(wf, 3, q2, -big);

    set_row(wg, 0, q, 2 * big);
    set_row(wg, 2, q, -big);
    set_row(wg, 3, {{3, 1}}, big);
    set_row(wg, 4, q2, -big);
    set_row(wg, 5, {{3, 1}}, big);
    set_row(wg, 6, {{0, 1 / big}}, big);
    set_row(wg, 7, {{3, 1}}, big);

    set_row(wh, 1, q, 2 * big);
    set_row(wh, 2, q, 2 * big);
    set_row(wh, 4, {{3, 1}}, big);
    set_row(wh, 5, q2, -big);
    set_row(wh, 6, {{3, 1}}, big);
    set_row(wh, 7, {{0, 1 / (big * nn)}}, big);

    // v1 (.) v2 = (p_k, p_j).
    set_row(v1, 0, {{3, 1}});
    set_row(v1, 1, {{1, 1}});
    set_row(v2, 0, {{1, 1}});
    set_row(v2, 1, {{3, 1}});

    AttentionParams head = AttentionParams::strassen(wf, wg, wh, v1, v2, s);
    amplify(head, amplification(nn, s, opt));
    spec.heads.push_back(std::move(head));
    spec.wo(4 + 2 * hd, dp * hd) = 1.0;
    spec.wo(5 + 2 * hd, dp * hd + 1) = 1.0;
  }

  // t_h = p_i + p_k + p_j - target; match iff t_h == 0 for some head.
  MLPLayer l1 = make_layer(2 * heads, d);
  MLPLayer l2 = make_layer(heads, 2 * heads);
  MLPLayer l3 = make_layer(1, heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const double t = static_cast<double>(targets[hd]);
    set_row(l1.weight, 2 * hd, {{1, 1}, {4 + 2 * hd, 1}, {5 + 2 * hd, 1}});
    l1.bias[2 * hd] = -t;
    set_row(l1.weight, 2 * hd + 1, {{1, -1}, {4 + 2 * hd, -1}, {5 + 2 * hd, -1}});
    l1.bias[2 * hd + 1] = t;
    l2.weight(hd, 2 * hd) = -1.0;
    l2.weight(hd, 2 * hd + 1) = -1.0;
    l2.bias[hd] = 1.0;
    l3.weight(0, hd) = 1.0;
  }
  l3.bias[0] = -0.5;
  spec.mlp.layers = {std::move(l1), std::move(l2), std::move(l3)};

  spec.posenc.d = d;
  spec.posenc.position = [d](std::size_t i) { return unit_sum(d, {{0, static_cast<double>(i)}, {3, 1}}); };
  spec.posenc.symbol = [d, m, allow_zero](std::int64_t p) {
    if (p < (allow_zero ? 0 : 1) || p >= m) throw std::out_of_range("match3: symbol outside the input range");
    const double v = static_cast<double>(p);
    return unit_sum(d, {{1, v}, {2, v * v}});
  };
  spec.posenc.aux_symbol = 1;
  spec.validate();
  return spec;
}

std::vector<std::int64_t> match3_word(const Match3Instance& inst) { return inst.p; }

std::vector<int> match3_answer(const Match3Instance& inst) {
  const std::size_t n = inst.p.size();
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n && !out[i]; ++j)
      for (std::size_t k = 0; k < n; ++k)
        if ((inst.p[i] + inst.p[j] + inst.p[k]) % inst.modulus == 0) {
          out[i] = 1;
          break;
        }
  return out;
}

std::int64_t match3_exact_score(const Match3Instance& inst, std::int64_t target, std::size_t i, std::size_t j,
                                std::size_t k) {
  const auto n = static_cast<std::int64_t>(inst.p.size());
  const std::int64_t t = inst.p[i] + inst.p[j] + inst.p[k] - target;
  return -sq(t) * n * n * n + (static_cast<std::int64_t>(j) + 1) * n + static_cast<std::int64_t>(k) + 1;
}

// ---------------------------------------------------------------------------
// Quotient composition. Encoding (A, B, i, i^2, j, j^2, 1, ci, ci^2, cj,
// cj^2), values (c, d, col d, A_cd, k, l, col k, B_kl) go to slots 11..18.

TransformerSpec build_quotient(std::size_t m, const BuildOptions& opt) {
  if (m < 1) throw std::invalid_argument("build_quotient: m must be >= 1");
  constexpr std::size_t d = 19;
  constexpr std::size_t dp = 18;
  const double mm = static_cast<double>(m);
  const double big = ipow(mm, 4);
  const double m3 = ipow(mm, 3);

  Matrix wf(dp, d), wg(dp, d), wh(dp, d), v1(dp, d), v2(dp, d);
  set_row(wf, 0, {{3, 1}}, big);
  set_row(wf, 1, {{2, 2}}, big);
  set_row(wf, 2, {{6, -1}}, big);
  set_row(wf, 3, {{5, 1}}, big);
  set_row(wf, 4, {{4, 2}}, big);
  set_row(wf, 5, {{6, -1}}, big);
  set_row(wf, 14, {{6, 1 / ipow(mm, 5)}}, big);
  set_row(wf, 15, {{6, 1 / ipow(mm, 6)}}, big);
  set_row(wf, 16, {{6, 1 / ipow(mm, 7)}}, big);
  set_row(wf, 17, {{6, 1 / ipow(mm, 8)}}, big);

  set_row(wg, 0, {{6, -1}}, big);
  set_row(wg, 1, {{2, 1}}, big);
  set_row(wg, 2, {{3, 1}}, big);
  set_row(wg, 6, {{10, 1}}, big);
  set_row(wg, 7, {{9, 2}}, big);
  set_row(wg, 8, {{6, -1}}, big);
  set_row(wg, 9, {{6, 1}}, big);
  set_row(wg, 10, {{0, 1}}, big);
  set_row(wg, 11, {{5, 1 / m3}}, big);
  set_row(wg, 12, {{4, -2 / m3}}, big);
  set_row(wg, 13, {{6, 1 / m3}}, big);
  set_row(wg, 14, {{2, 1}}, big);
  set_row(wg, 15, {{4, 1}}, big);

  set_row(wh, 3, {{6, -1}}, big);
  set_row(wh, 4, {{4, 1}}, big);
  set_row(wh, 5, {{5, 1}}, big);
  set_row(wh, 6, {{6, -1}}, big);
  set_row(wh, 7, {{7, 1}}, big);
  set_row(wh, 8, {{8, 1}}, big);
  set_row(wh, 9, {{1, 1}}, big);
  set_row(wh, 10, {{6, 1}}, big);
  set_row(wh, 11, {{6, 1}}, big);
  set_row(wh, 12, {{2, 1}}, big);
  set_row(wh, 13, {{3, 1}}, big);
  set_row(wh, 16, {{2, 1}}, big);
  set_row(wh, 17, {{4, 1}}, big);

  set_row(v1, 0, {{2, 1}});
  set_row(v1, 1, {{4, 1}});
  set_row(v1, 2, {{9, 1}});
  set_row(v1, 3, {{0, 1}});
  for (std::size_t r = 4; r < 8; ++r) set_row(v1, r, {{6, 1}});
  for (std::size_t r = 0; r < 4; ++r) set_row(v2, r, {{6, 1}});
  set_row(v2, 4, {{2, 1}});
  set_row(v2, 5, {{4, 1}});
  set_row(v2, 6, {{7, 1}});
  set_row(v2, 7, {{1, 1}});

  const double s = 1.0 / std::sqrt(static_cast<double>(dp));
  AttentionParams head = AttentionParams::strassen(wf, wg, wh, v1, v2, s);
  amplify(head, amplification(1.0, s, opt));

  TransformerSpec spec;
  spec.d = d;
  spec.heads.push_back(std::move(head));
  spec.wo = Matrix(d, dp);
  for (std::size_t t = 0; t < 8; ++t) spec.wo(11 + t, t) = 1.0;

  // Slots: i=2, j=4, c=11, d=12, col d=13, A=14, k=15, l=16, col k=17, B=18.
  MLPLayer l1 = make_layer(10, d);
  set_row(l1.weight, 0, {{2, 1}, {11, -1}});
  set_row(l1.weight, 1, {{2, -1}, {11, 1}});
  set_row(l1.weight, 2, {{16, 1}, {4, -1}});
  set_row(l1.weight, 3, {{16, -1}, {4, 1}});
  set_row(l1.weight, 4, {{13, 1}, {17, -1}});
  set_row(l1.weight, 5, {{13, -1}, {17, 1}});
  set_row(l1.weight, 6, {{12, 1}, {15, -1}});
  set_row(l1.weight, 7, {{12, -1}, {15, 1}});
  set_row(l1.weight, 8, {{14, 1}});
  set_row(l1.weight, 9, {{18, 1}});
  // Pass the mismatch terms through, form |d-k| and relu(|d-k| - 1).
  MLPLayer l2 = make_layer(10, 10);
  for (std::size_t u = 0; u < 6; ++u) l2.weight(u, u) = 1.0;
  l2.weight(6, 6) = l2.weight(6, 7) = 1.0;
  l2.weight(7, 6) = l2.weight(7, 7) = 1.0;
  l2.bias[7] = -1.0;
  l2.weight(8, 8) = 1.0;
  l2.weight(9, 9) = 1.0;
  // A + B + min(|d-k|, 1) - mismatches - 2.5.
  MLPLayer l3 = make_layer(1, 10);
  for (std::size_t u = 0; u < 6; ++u) l3.weight(0, u) = -1.0;
  l3.weight(0, 6) = 1.0;
  l3.weight(0, 7) = -1.0;
  l3.weight(0, 8) = 1.0;
  l3.weight(0, 9) = 1.0;
  l3.bias[0] = -2.5;
  spec.mlp.layers = {std::move(l1), std::move(l2), std::move(l3)};

  spec.posenc.d = d;
  spec.posenc.position = [m](std::size_t t) {
    const auto [i, j] = cell(t - 1, m);
    const double x = static_cast<double>(i), y = static_cast<double>(j);
    return unit_sum(d, {{2, x}, {3, x * x}, {4, y}, {5, y * y}, {6, 1}});
  };
  // Symbol packs (A, B, col i, col j) as ((A + 2B) * (m+1) + ci) * (m+1) + cj.
  spec.posenc.symbol = [m](std::int64_t s) {
    const auto base = static_cast<std::int64_t>(m) + 1;
    if (s < 0 || s >= 4 * base * base) throw std::out_of_range("quotient: symbol outside its range");
    const std::int64_t cj = s % base;
    const std::int64_t ci = (s / base) % base;
    const std::int64_t ab = s / (base * base);
    if (ci < 1 || cj < 1) throw std::out_of_range("quotient: colors must lie in [1, m]");
    const double x = static_cast<double>(ci), y = static_cast<double>(cj);
    return unit_sum(d, {{0, static_cast<double>(ab & 1)},
                        {1, static_cast<double>((ab >> 1) & 1)},
                        {7, x},
                        {8, x * x},
                        {9, y},
                        {10, y * y}});
  };
  spec.posenc.aux_symbol = 0;
  spec.validate();
  return spec;
}

std::vector<std::int64_t> quotient_word(const QuotientInstance& inst) {
  const std::size_t m = inst.m;
  side_of(inst.a, m, "quotient");
  side_of(inst.b, m, "quotient");
  if (inst.col.size() != m) throw ShapeError("quotient: coloring must have m entries");
  const auto base = static_cast<std::int64_t>(m) + 1;
  std::vector<std::int64_t> w(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::int64_t ab = (inst.a[i * m + j] ? 1 : 0) + (inst.b[i * m + j] ? 2 : 0);
      w[i * m + j] = (ab * base + inst.col[i]) * base + inst.col[j];
    }
  return w;
}

std::vector<int> quotient_answer(const QuotientInstance& inst) {
  const std::size_t m = inst.m;
  std::vector<int> out(m * m, 0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k1 = 0; k1 < m && !out[i * m + j]; ++k1)
        for (std::size_t k2 = 0; k2 < m; ++k2) {
          if (k1 != k2 && inst.a[i * m + k1] && inst.b[k2 * m + j] && inst.col[k1] == inst.col[k2]) {
            out[i * m + j] = 1;
            break;
          }
        }
  return out;
}

std::int64_t quotient_exact_score(const QuotientInstance& inst, std::size_t q, std::size_t g, std::size_t h) {
  const std::size_t m = inst.m;
  if (m > 40) throw std::invalid_argument("quotient_exact_score: m too large for 64-bit scores");
  const auto mm = static_cast<std::int64_t>(m);
  const auto [i, j] = cell(q, m);
  const auto [c, d] = cell(g, m);
  const auto [k, l] = cell(h, m);
  const std::int64_t cd = inst.col[static_cast<std::size_t>(d - 1)];
  const std::int64_t ck = inst.col[static_cast<std::size_t>(k - 1)];
  const std::int64_t integral = -sq(i - c) - sq(cd - ck) - sq(l - j) + inst.a[g] + inst.b[h];
  return integral * ipow64(mm, 8) + sq(d - k) * ipow64(mm, 5) + (c * ipow64(mm, 3) + d * mm * mm + k * mm + l);
}

// ---------------------------------------------------------------------------
// Verification.

namespace {

struct ArgmaxInfo {
  std::size_t j = 0, k = 0;
  double margin = 0.0;
};

ArgmaxInfo float_argmax(const Matrix& scores, std::size_t i, std::size_t n) {
  double best = -std::numeric_limits<double>::infinity();
  double second = best;
  std::size_t arg = 0;
  for (std::size_t t = 0; t < n * n; ++t) {
    const double v = scores(i, t);
    if (v > best) {
      second = best;
      best = v;
      arg = t;
    } else if (v > second) {
      second = v;
    }
  }
  return {arg / n, arg % n, n * n > 1 ? best - second : std::numeric_limits<double>::infinity()};
}

template <class Score>
std::pair<std::size_t, std::size_t> exact_argmax(std::size_t n, Score score) {
  std::int64_t best = std::numeric_limits<std::int64_t>::min();
  std::pair<std::size_t, std::size_t> arg{0, 0};
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) {
      const std::int64_t v = score(j, k);
      if (v > best) {
        best = v;
        arg = {j, k};
      }
    }
  return arg;
}

void note_margin(ConstructionReport& r, double margin, bool& first) {
  if (!std::isfinite(margin)) return;
  if (first) {
    r.min_margin = r.max_margin = margin;
    first = false;
  } else {
    r.min_margin = std::min(r.min_margin, margin);
    r.max_margin = std::max(r.max_margin, margin);
  }
}

template <class Inst>
void record(ConstructionReport& r, const Inst& inst_json, const std::vector<std::int64_t>& expected,
            const std::vector<std::int64_t>& got) {
  ++r.tried;
  if (expected == got) {
    ++r.exact;
  } else {
    r.failures.push_back({inst_json, expected, got});
  }
}

std::vector<std::int64_t> sign_readout(const Vector& y) {
  std::vector<std::int64_t> out(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) out[t] = readout_sign(y[t]);
  return out;
}

std::vector<std::int64_t> widen(const std::vector<int>& v) { return {v.begin(), v.end()}; }

nlohmann::json bits_json(const std::vector<std::uint8_t>& v) {
  nlohmann::json j = nlohmann::json::array();
  for (auto b : v) j.push_back(static_cast<int>(b));
  return j;
}

} // namespace

nlohmann::json ConstructionReport::to_json() const {
  nlohmann::json j;
  j["task"] = theory_task_name(task);
  j["tried"] = tried;
  j["exact"] = exact;
  j["min_margin"] = min_margin;
  j["max_margin"] = max_margin;
  j["argmax_mismatches"] = argmax_mismatches;
  nlohmann::json fails = nlohmann::json::array();
  for (const auto& f : failures) fails.push_back({{"instance", f.instance}, {"expected", f.expected}, {"got", f.got}});
  j["failures"] = std::move(fails);
  return j;
}

void merge_report(ConstructionReport& into, const ConstructionReport& part) {
  if (part.tried == 0) return;
  if (into.tried == 0) {
    into.task = part.task;
    into.min_margin = part.min_margin;
    into.max_margin = part.max_margin;
  } else {
    into.min_margin = std::min(into.min_margin, part.min_margin);
    into.max_margin = std::max(into.max_margin, part.max_margin);
  }
  into.tried += part.tried;
  into.exact += part.exact;
  into.argmax_mismatches += part.argmax_mismatches;
  into.failures.insert(into.failures.end(), part.failures.begin(), part.failures.end());
}

ConstructionReport verify_funccomp(const std::vector<FuncCompInstance>& instances, const BuildOptions& opt,
                                   StrassenPath path) {
  ConstructionReport r;
  r.task = TheoryTask::FuncComp;
  bool first = true;
  std::map<std::size_t, TransformerSpec> cache;
  for (const FuncCompInstance& inst : instances) {
    const std::size_t n = inst.g.size();
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, build_funccomp(n, opt)).first;
    TransformerSpec& spec = it->second;
    spec.path = path;
    const std::vector<std::int64_t> word = funccomp_word(inst);
    const Matrix x = encode(word, spec, false);
    const Vector y = forward(x, spec);
    const std::vector<std::int64_t> got{readout_nearest_int(y.back())};
    const std::vector<std::int64_t> expected{funccomp_answer(inst)};

    const Matrix scores = pair_scores(x, spec.heads[0]);
    const std::size_t tokens = word.size();
    for (std::size_t i = 0; i < tokens; ++i) {
      const ArgmaxInfo fa = float_argmax(scores, i, tokens);
      note_margin(r, fa.margin, first);
      const auto ex = exact_argmax(tokens, [&](std::size_t j, std::size_t k) { return funccomp_exact_score(inst, i, j, k); });
      const auto wj = static_cast<std::size_t>(word[i] - 1);
      const auto wk = n + static_cast<std::size_t>(word[wj] - 1);
      if (ex != std::make_pair(fa.j, fa.k) || ex != std::make_pair(wj, wk)) ++r.argmax_mismatches;
    }
    record(r, nlohmann::json{{"g", inst.g}, {"h", inst.h}, {"x", inst.x}}, expected, got);
  }
  return r;
}

ConstructionReport verify_binrel(const std::vector<BinRelInstance>& instances, const BuildOptions& opt,
                                 StrassenPath path) {
  ConstructionReport r;
  r.task = TheoryTask::BinRel;
  bool first = true;
  std::map<std::size_t, TransformerSpec> cache;
  for (const BinRelInstance& inst : instances) {
    const std::size_t m = inst.m;
    auto it = cache.find(m);
    if (it == cache.end()) it = cache.emplace(m, build_binrel(m, opt)).first;
    TransformerSpec& spec = it->second;
    spec.path = path;
    const Matrix x = encode(binrel_word(inst), spec, false);
    const std::vector<std::int64_t> got = sign_readout(forward(x, spec));
    const std::vector<int> answer = binrel_answer(inst);

    const Matrix scores = pair_scores(x, spec.heads[0]);
    const std::size_t tokens = m * m;
    for (std::size_t q = 0; q < tokens; ++q) {
      const ArgmaxInfo fa = float_argmax(scores, q, tokens);
      note_margin(r, fa.margin, first);
      const auto ex = exact_argmax(tokens, [&](std::size_t g, std::size_t h) { return binrel_exact_score(inst, q, g, h); });
      const auto [i, j] = cell(q, m);
      const auto [c, d] = cell(ex.first, m);
      const auto [k, l] = cell(ex.second, m);
      const bool witness = c == i && l == j && d == k && inst.a[ex.first] && inst.b[ex.second];
      if (ex != std::make_pair(fa.j, fa.k) || witness != (answer[q] == 1)) ++r.argmax_mismatches;
    }
    record(r, nlohmann::json{{"m", m}, {"a", bits_json(inst.a)}, {"b", bits_json(inst.b)}}, widen(answer), got);
  }
  return r;
}

ConstructionReport verify_match3(const std::vector<Match3Instance>& instances, const BuildOptions& opt,
                                 StrassenPath path) {
  ConstructionReport r;
  r.task = TheoryTask::Match3;
  bool first = true;
  std::map<std::tuple<std::size_t, std::int64_t, bool>, TransformerSpec> cache;
  for (const Match3Instance& inst : instances) {
    const std::size_t n = inst.p.size();
    const bool zero = std::find(inst.p.begin(), inst.p.end(), 0) != inst.p.end();
    const auto key = std::make_tuple(n, inst.modulus, zero);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, build_match3(n, inst.modulus, zero, opt)).first;
    TransformerSpec& spec = it->second;
    spec.path = path;
    const Matrix x = encode(match3_word(inst), spec, false);
    const std::vector<std::int64_t> got = sign_readout(forward(x, spec));
    const std::vector<int> answer = match3_answer(inst);

    std::vector<std::int64_t> targets;
    if (zero) targets.push_back(0);
    targets.push_back(inst.modulus);
    targets.push_back(2 * inst.modulus);
    for (std::size_t hd = 0; hd < targets.size(); ++hd) {
      const Matrix scores = pair_scores(x, spec.heads[hd]);
      for (std::size_t i = 0; i < n; ++i) {
        const ArgmaxInfo fa = float_argmax(scores, i, n);
        note_margin(r, fa.margin, first);
        const auto ex = exact_argmax(n, [&](std::size_t j, std::size_t k) {
          return match3_exact_score(inst, targets[hd], i, j, k);
        });
        std::int64_t best_gap = std::numeric_limits<std::int64_t>::max();
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k)
            best_gap = std::min(best_gap, std::abs(inst.p[i] + inst.p[j] + inst.p[k] - targets[hd]));
        const std::int64_t gap = std::abs(inst.p[i] + inst.p[ex.first] + inst.p[ex.second] - targets[hd]);
        if (ex != std::make_pair(fa.j, fa.k) || gap != best_gap) ++r.argmax_mismatches;
      }
    }
    record(r, nlohmann::json{{"modulus", inst.modulus}, {"p", inst.p}}, widen(answer), got);
  }
  return r;
}

ConstructionReport verify_quotient(const std::vector<QuotientInstance>& instances, const BuildOptions& opt,
                                   StrassenPath path) {
  ConstructionReport r;
  r.task = TheoryTask::Quotient;
  bool first = true;
  std::map<std::size_t, TransformerSpec> cache;
  for (const QuotientInstance& inst : instances) {
    const std::size_t m = inst.m;
    auto it = cache.find(m);
    if (it == cache.end()) it = cache.emplace(m, build_quotient(m, opt)).first;
    TransformerSpec& spec = it->second;
    spec.path = path;
    const Matrix x = encode(quotient_word(inst), spec, false);
    const std::vector<std::int64_t> got = sign_readout(forward(x, spec));
    const std::vector<int> answer = quotient_answer(inst);

    const Matrix scores = pair_scores(x, spec.heads[0]);
    const std::size_t tokens = m * m;
    for (std::size_t q = 0; q < tokens; ++q) {
      const ArgmaxInfo fa = float_argmax(scores, q, tokens);
      note_margin(r, fa.margin, first);
      const auto ex =
          exact_argmax(tokens, [&](std::size_t g, std::size_t h) { return quotient_exact_score(inst, q, g, h); });
      const auto [i, j] = cell(q, m);
      const auto [c, d] = cell(ex.first, m);
      const auto [k, l] = cell(ex.second, m);
      const bool witness = c == i && l == j && d != k &&
                           inst.col[static_cast<std::size_t>(d - 1)] == inst.col[static_cast<std::size_t>(k - 1)] &&
                           inst.a[ex.first] && inst.b[ex.second];
      if (ex != std::make_pair(fa.j, fa.k) || witness != (answer[q] == 1)) ++r.argmax_mismatches;
    }
    record(r,
           nlohmann::json{{"m", m}, {"a", bits_json(inst.a)}, {"b", bits_json(inst.b)}, {"col", inst.col}},
           widen(answer), got);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Random instances.

FuncCompInstance random_funccomp(std::size_t n, RngStream& rng) {
  FuncCompInstance inst;
  const auto hi = static_cast<std::int64_t>(n);
  for (std::size_t t = 0; t < n; ++t) inst.g.push_back(rng.uniform_int(1, hi));
  for (std::size_t t = 0; t < n; ++t) inst.h.push_back(rng.uniform_int(1, hi));
  inst.x = rng.uniform_int(1, hi);
  return inst;
}

BinRelInstance random_binrel(std::size_t m, double density, RngStream& rng) {
  BinRelInstance inst{m, std::vector<std::uint8_t>(m * m), std::vector<std::uint8_t>(m * m)};
  for (auto& v : inst.a) v = rng.bernoulli(density) ? 1 : 0;
  for (auto& v : inst.b) v = rng.bernoulli(density) ? 1 : 0;
  return inst;
}

Match3Instance random_match3(std::size_t n, std::int64_t modulus, RngStream& rng) {
  Match3Instance inst;
  inst.modulus = modulus;
  for (std::size_t t = 0; t < n; ++t) inst.p.push_back(rng.uniform_int(1, modulus - 1));
  return inst;
}

QuotientInstance random_quotient(std::size_t m, double density, RngStream& rng) {
  QuotientInstance inst{m, std::vector<std::uint8_t>(m * m), std::vector<std::uint8_t>(m * m), {}};
  for (auto& v : inst.a) v = rng.bernoulli(density) ? 1 : 0;
  for (auto& v : inst.b) v = rng.bernoulli(density) ? 1 : 0;
  for (std::size_t t = 0; t < m; ++t) inst.col.push_back(rng.uniform_int(1, static_cast<std::int64_t>(m)));
  return inst;
}

} // namespace sattn
