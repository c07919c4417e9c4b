#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "sattn/attention.hpp"
#include "sattn/errors.hpp"
#include "support.hpp"

using namespace sattn;
using sattn::test::max_relative_diff;
using sattn::test::random_matrix;

namespace {

Vector proj(const Matrix& w, std::span<const double> x) {
  Vector out(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x);
  return out;
}

Vector hadamard_vec(const Vector& a, const Vector& b) {
  Vector out(a.size());
  for (std::size_t c = 0; c < a.size(); ++c) out[c] = a[c] * b[c];
  return out;
}

// Weighted average of values under exp(score - max), straight from the
// definitions.
Vector average(const std::vector<double>& scores, const std::vector<Vector>& values) {
  const double peak = *std::max_element(scores.begin(), scores.end());
  Vector acc(values.front().size(), 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    const double w = std::exp(scores[t] - peak);
    total += w;
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += w * values[t][c];
  }
  for (double& v : acc) v /= total;
  return acc;
}

Matrix loop_standard(const Matrix& x, const AttentionParams& p) {
  const std::size_t n = x.rows();
  const double s = p.effective_scale();
  Matrix out(n, p.output_dim());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores;
    std::vector<Vector> values;
    for (std::size_t j = 0; j < n; ++j) {
      scores.push_back(s * dot(proj(p.weights[0], x.row(i)), proj(p.weights[1], x.row(j))));
      values.push_back(proj(p.weights[2], x.row(j)));
    }
    const Vector a = average(scores, values);
    std::copy(a.begin(), a.end(), out.row(i).begin());
  }
  return out;
}

Matrix loop_triangular(const Matrix& x, const AttentionParams& p, std::size_t m) {
  const double s = p.effective_scale();
  Matrix out(m * m, p.output_dim());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> scores;
      std::vector<Vector> values;
      for (std::size_t l = 0; l < m; ++l) {
        const auto il = x.row(i * m + l);
        const auto lj = x.row(l * m + j);
        scores.push_back(s * dot(proj(p.weights[0], il), proj(p.weights[1], lj)));
        values.push_back(hadamard_vec(proj(p.weights[2], il), proj(p.weights[3], lj)));
      }
      const Vector a = average(scores, values);
      std::copy(a.begin(), a.end(), out.row(i * m + j).begin());
    }
  return out;
}

Matrix loop_third_order(const Matrix& x, const AttentionParams& p) {
  const std::size_t n = x.rows();
  const double s = p.effective_scale();
  Matrix out(n, p.output_dim());
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores;
    std::vector<Vector> values;
    const Vector q = proj(p.weights[0], x.row(i));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t l = 0; l < n; ++l) {
        const Vector kk = hadamard_vec(proj(p.weights[1], x.row(j)), proj(p.weights[2], x.row(l)));
        scores.push_back(s * dot(q, kk));
        values.push_back(hadamard_vec(proj(p.weights[3], x.row(j)), proj(p.weights[4], x.row(l))));
      }
    const Vector a = average(scores, values);
    std::copy(a.begin(), a.end(), out.row(i).begin());
  }
  return out;
}

double strassen_score(const Matrix& x, const AttentionParams& p, std::size_t i, std::size_t j, std::size_t k) {
  const Vector f = proj(p.weights[0], x.row(i));
  const Vector g = proj(p.weights[1], x.row(j));
  const Vector h = proj(p.weights[2], x.row(k));
  return p.effective_scale() * (dot(f, g) + dot(g, h) + dot(h, f));
}

Matrix mean_rows(const Matrix& v) {
  Matrix out(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(0, c) += v(r, c) / static_cast<double>(v.rows());
  return out;
}

} // namespace

TEST_CASE("standard attention") {
  RngStream rng(21);
  SUBCASE("single token returns its value") {
    const Matrix x = random_matrix(1, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng);
    const Matrix v = matmul_transposed(x, p.weights[2]);
    CHECK(max_abs_diff(standard_attention(x, p), v) < 1e-15);
  }
  SUBCASE("zero scores average the values") {
    const Matrix x = random_matrix(5, 4, rng);
    AttentionParams p = AttentionParams::random(Mechanism::Standard, 4, 4, 1.0, rng);
    p.weights[0] = Matrix(4, 4);
    p.weights[1] = Matrix(4, 4);
    const Matrix mean = mean_rows(matmul_transposed(x, p.weights[2]));
    const Matrix out = standard_attention(x, p);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 4; ++c) CHECK(out(i, c) == doctest::Approx(mean(0, c)).epsilon(1e-14));
  }
  SUBCASE("matches a direct loop") {
    const Matrix x = random_matrix(5, 4, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Standard, 4, 4, 1.0, rng);
    CHECK(max_abs_diff(standard_attention(x, p), loop_standard(x, p)) < 1e-12);
  }
  SUBCASE("masked pairs get zero weight") {
    const Matrix x = random_matrix(4, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng);
    const std::vector<std::uint8_t> keys{0, 1, 0, 1};
    const Matrix full = standard_attention_keys(x, p, keys);
    std::vector<std::size_t> keep{0, 2};
    Matrix xs(2, 3);
    for (std::size_t t = 0; t < 2; ++t) std::copy(x.row(keep[t]).begin(), x.row(keep[t]).end(), xs.row(t).begin());
    const Matrix sub = standard_attention(xs, p);
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t c = 0; c < 3; ++c) CHECK(full(keep[t], c) == doctest::Approx(sub(t, c)).epsilon(1e-13));
  }
  SUBCASE("errors") {
    const AttentionParams p = AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng);
    CHECK_THROWS(standard_attention(Matrix(0, 3), p));
    const Matrix x = random_matrix(2, 3, rng);
    const std::vector<std::uint8_t> all{1, 1, 1, 1};
    CHECK_THROWS(standard_attention(x, p, all));
    CHECK_THROWS_AS(standard_attention(random_matrix(2, 4, rng), p), ShapeError);
  }
}

TEST_CASE("triangular attention") {
  RngStream rng(22);
  SUBCASE("single cell") {
    const Matrix x = random_matrix(1, 4, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Triangular, 4, 4, 1.0, rng);
    const Matrix expect = hadamard(matmul_transposed(x, p.weights[2]), matmul_transposed(x, p.weights[3]));
    CHECK(max_abs_diff(triangular_attention(x, p), expect) < 1e-15);
  }
  SUBCASE("matches a direct loop") {
    const Matrix x = random_matrix(9, 4, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Triangular, 4, 4, 1.0, rng);
    CHECK(max_abs_diff(triangular_attention(x, p), loop_triangular(x, p, 3)) < 1e-12);
  }
  SUBCASE("zero scores average over the middle index") {
    const Matrix x = random_matrix(4, 3, rng);
    AttentionParams p = AttentionParams::random(Mechanism::Triangular, 3, 3, 1.0, rng);
    p.weights[0] = Matrix(3, 3);
    const Matrix out = triangular_attention(x, p);
    const Matrix v1 = matmul_transposed(x, p.weights[2]);
    const Matrix v2 = matmul_transposed(x, p.weights[3]);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t c = 0; c < 3; ++c) {
          const double e = 0.5 * (v1(i * 2, c) * v2(j, c) + v1(i * 2 + 1, c) * v2(2 + j, c));
          CHECK(out(i * 2 + j, c) == doctest::Approx(e).epsilon(1e-14));
        }
  }
  SUBCASE("non-square token count") {
    const AttentionParams p = AttentionParams::random(Mechanism::Triangular, 3, 3, 1.0, rng);
    CHECK_THROWS_AS(triangular_attention(random_matrix(5, 3, rng), p), ShapeError);
  }
}

TEST_CASE("third-order attention") {
  RngStream rng(23);
  SUBCASE("single token") {
    const Matrix x = random_matrix(1, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::ThirdOrder, 3, 3, 1.0, rng);
    const Matrix expect = hadamard(matmul_transposed(x, p.weights[3]), matmul_transposed(x, p.weights[4]));
    CHECK(max_abs_diff(third_order_attention(x, p), expect) < 1e-15);
  }
  SUBCASE("matches a direct double loop") {
    const Matrix x = random_matrix(4, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::ThirdOrder, 3, 3, 1.0, rng);
    CHECK(max_abs_diff(third_order_attention(x, p), loop_third_order(x, p)) < 1e-12);
  }
  SUBCASE("zero scores average the n^2 pairs") {
    const Matrix x = random_matrix(3, 2, rng);
    AttentionParams p = AttentionParams::random(Mechanism::ThirdOrder, 2, 2, 1.0, rng);
    p.weights[0] = Matrix(2, 2);
    const Matrix v1 = matmul_transposed(x, p.weights[3]);
    const Matrix v2 = matmul_transposed(x, p.weights[4]);
    const Matrix out = third_order_attention(x, p);
    for (std::size_t c = 0; c < 2; ++c) {
      double e = 0.0;
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 3; ++k) e += v1(j, c) * v2(k, c) / 9.0;
      for (std::size_t i = 0; i < 3; ++i) CHECK(out(i, c) == doctest::Approx(e).epsilon(1e-14));
    }
  }
  SUBCASE("empty input") {
    const AttentionParams p = AttentionParams::random(Mechanism::ThirdOrder, 2, 2, 1.0, rng);
    CHECK_THROWS(third_order_attention(Matrix(0, 2), p));
  }
}

TEST_CASE("strassen attention naive path") {
  RngStream rng(24);
  SUBCASE("single token") {
    const Matrix x = random_matrix(1, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Strassen, 3, 3, 1.0, rng);
    const Matrix expect = hadamard(matmul_transposed(x, p.weights[3]), matmul_transposed(x, p.weights[4]));
    CHECK(max_abs_diff(strassen_attention_naive(x, p), expect) < 1e-15);
    CHECK(max_abs_diff(strassen_attention_fast(x, p), expect) < 1e-15);
  }
  SUBCASE("zero projections average the n^2 pairs") {
    const Matrix x = random_matrix(4, 2, rng);
    AttentionParams p = AttentionParams::random(Mechanism::Strassen, 2, 2, 1.0, rng);
    for (std::size_t w = 0; w < 3; ++w) p.weights[w] = Matrix(2, 2);
    const Matrix v1 = matmul_transposed(x, p.weights[3]);
    const Matrix v2 = matmul_transposed(x, p.weights[4]);
    const Matrix out = strassen_attention_naive(x, p);
    for (std::size_t c = 0; c < 2; ++c) {
      double e = 0.0;
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 4; ++k) e += v1(j, c) * v2(k, c) / 16.0;
      for (std::size_t i = 0; i < 4; ++i) CHECK(out(i, c) == doctest::Approx(e).epsilon(1e-14));
    }
  }
  SUBCASE("pair scores equal the cyclic dot products") {
    const Matrix x = random_matrix(4, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Strassen, 3, 2, 1.0, rng);
    const Matrix s = pair_scores(x, p);
    double worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 4; ++k) worst = std::max(worst, std::abs(s(i, j * 4 + k) - strassen_score(x, p, i, j, k)));
    CHECK(worst < 1e-14);
  }
  SUBCASE("wrong mechanism") {
    const AttentionParams p = AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng);
    CHECK_THROWS(strassen_attention_naive(random_matrix(2, 3, rng), p));
    CHECK_THROWS(strassen_attention_fast(random_matrix(2, 3, rng), p));
  }
}

TEST_CASE("strassen attention fast path agrees with the naive loop") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    RngStream rng(1000 + seed);
    const std::size_t n = static_cast<std::size_t>(rng.uniform_int(1, 32));
    const std::size_t d = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const Matrix x = random_matrix(n, d, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Strassen, d, d, 1.0, rng);
    worst = std::max(worst, max_relative_diff(strassen_attention_fast(x, p), strassen_attention_naive(x, p)));
  }
  CHECK(worst < 1e-9);

  SUBCASE("small cutoff exercises the recursion") {
    RngStream rng(77);
    const Matrix x = random_matrix(37, 4, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Strassen, 4, 4, 1.0, rng);
    CHECK(max_relative_diff(strassen_attention_fast(x, p, {}, nullptr, 4), strassen_attention_naive(x, p)) < 1e-9);
  }
  SUBCASE("key mask") {
    RngStream rng(78);
    const Matrix x = random_matrix(6, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Strassen, 3, 3, 1.0, rng);
    const std::vector<std::uint8_t> keys{0, 0, 1, 0, 1, 0};
    CHECK(max_relative_diff(strassen_attention_fast(x, p, keys), strassen_attention_naive(x, p, keys)) < 1e-9);
    const std::vector<std::uint8_t> all(6, 1);
    CHECK_THROWS(strassen_attention_fast(x, p, all));
    CHECK_THROWS(strassen_attention_naive(x, p, all));
  }
}

TEST_CASE("triple product ratio ignores row, column and global factors") {
  RngStream rng(31);
  const std::size_t n = 5;
  const Matrix x = random_matrix(n, n, rng, 0.1, 1.0);
  const Matrix y = random_matrix(n, n, rng, 0.1, 1.0);
  const Matrix z = random_matrix(n, n, rng, 0.1, 1.0);
  const Matrix v1 = random_matrix(n, 2, rng);
  const Matrix v2 = random_matrix(n, 2, rng);
  const Matrix base = triple_product_attention(x, y, z, v1, v2);
  const std::size_t i = 2;
  Matrix xs = x, zs = z;
  for (std::size_t j = 0; j < n; ++j) xs(i, j) *= 2.0;
  for (std::size_t k = 0; k < n; ++k) zs(k, i) *= 3.0;
  const Matrix out = triple_product_attention(xs, scaled(y, 5.0), zs, v1, v2);
  for (std::size_t c = 0; c < 2; ++c) CHECK(out(i, c) == doctest::Approx(base(i, c)).epsilon(1e-14));
  CHECK_THROWS_AS(triple_product_attention(Matrix(2, 3), y, z, v1, v2), ShapeError);
}

TEST_CASE("construction-scale scores select the log-domain argmax") {
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream rng(500 + seed);
    const std::size_t n = 8;
    const Matrix x = random_matrix(n, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Strassen, 3, 3, 100.0, rng);
    const Matrix s = pair_scores(x, p);
    const Matrix v1 = matmul_transposed(x, p.weights[3]);
    const Matrix v2 = matmul_transposed(x, p.weights[4]);
    const Matrix fast = strassen_attention_fast(x, p);
    const Matrix naive = strassen_attention_naive(x, p);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> order(n * n);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s(i, a) > s(i, b); });
      if (s(i, order[0]) - s(i, order[1]) < 800.0) continue;
      const std::size_t j = order[0] / n, k = order[0] % n;
      for (std::size_t c = 0; c < 3; ++c) {
        const double e = v1(j, c) * v2(k, c);
        CHECK(naive(i, c) == e);
        CHECK(std::abs(fast(i, c) - e) <= 1e-12 * std::abs(e));
      }
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("split decomposition") {
  RngStream rng(41);
  SUBCASE("recombines to the auxiliary output") {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const Matrix x = random_matrix(7, 4, rng);
      const AttentionParams p = AttentionParams::random(Mechanism::Standard, 4, 4, 1.0, rng);
      std::vector<std::size_t> a;
      for (std::size_t i = 0; i < 6; ++i)
        if (rng.bernoulli(0.5)) a.push_back(i);
      const Vector r = split_decompose(x, p, a).recombine();
      const Matrix full = standard_attention(x, p);
      for (std::size_t c = 0; c < 4; ++c) worst = std::max(worst, std::abs(r[c] - full(6, c)));
    }
    CHECK(worst < 1e-12);
  }
  SUBCASE("empty position set") {
    const Matrix x = random_matrix(4, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng);
    const SplitDecomposition d = split_decompose(x, p, {});
    CHECK(d.lambda == 0.0);
    for (double v : d.alpha) CHECK(v == 0.0);
  }
  SUBCASE("zero auxiliary score with zero shift") {
    // Zero score projections make every score 0, so the shift is 0.
    const Matrix x = random_matrix(4, 3, rng);
    AttentionParams p = AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng);
    p.weights[0] = Matrix(3, 3);
    const SplitDecomposition d = split_decompose(x, p, std::vector<std::size_t>{0, 2});
    CHECK(d.shift == 0.0);
    CHECK(d.nu == 1.0);
    const Matrix v = matmul_transposed(x, p.weights[2]);
    for (std::size_t c = 0; c < 3; ++c) CHECK(d.gamma[c] == v(3, c));
  }
  SUBCASE("auxiliary index rejected") {
    const Matrix x = random_matrix(4, 3, rng);
    const AttentionParams p = AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng);
    CHECK_THROWS_AS(split_decompose(x, p, std::vector<std::size_t>{3}), std::invalid_argument);
  }
}

TEST_CASE("zero-score heads are permutation equivariant") {
  RngStream rng(51);
  const Matrix x = random_matrix(4, 3, rng);
  AttentionParams p = AttentionParams::random(Mechanism::Strassen, 3, 3, 1.0, rng);
  for (std::size_t w = 0; w < 3; ++w) p.weights[w] = Matrix(3, 3);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Matrix xp(4, 3);
  for (std::size_t t = 0; t < 4; ++t) std::copy(x.row(perm[t]).begin(), x.row(perm[t]).end(), xp.row(t).begin());
  const Matrix a = strassen_attention_naive(x, p);
  const Matrix b = strassen_attention_naive(xp, p);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t c = 0; c < 3; ++c) CHECK(b(t, c) == doctest::Approx(a(perm[t], c)).epsilon(1e-14));
}

TEST_CASE("mechanism names") {
  CHECK(parse_mechanism("third_order") == Mechanism::ThirdOrder);
  CHECK(parse_mechanism("strassen") == Mechanism::Strassen);
  CHECK_FALSE(parse_mechanism("quadratic").has_value());
  CHECK(std::string(mechanism_name(Mechanism::Triangular)) == "triangular");
}
