#include <doctest.h>

#include <cmath>
#include <vector>

#include "sattn/constructions.hpp"
#include "sattn/transformer.hpp"
#include "support.hpp"

using namespace sattn;
using sattn::test::random_matrix;

namespace {

// One standard head, d = 3, W_O and a two-layer MLP drawn at random; the
// positional part is (i, 0, 0) and symbols map to (0, s, 1).
TransformerSpec small_spec(RngStream& rng) {
  TransformerSpec spec;
  spec.d = 3;
  spec.heads.push_back(AttentionParams::random(Mechanism::Standard, 3, 3, 1.0, rng));
  spec.wo = random_matrix(3, 3, rng);
  spec.mlp.layers.push_back({random_matrix(4, 3, rng), Vector{0.1, -0.2, 0.3, 0.0}});
  spec.mlp.layers.push_back({random_matrix(2, 4, rng), Vector{0.5, -0.5}});
  spec.posenc.d = 3;
  spec.posenc.position = [](std::size_t i) { return Vector{static_cast<double>(i), 0.0, 0.0}; };
  spec.posenc.symbol = [](std::int64_t s) {
    if (s < 0 || s > 9) throw std::out_of_range("symbol");
    return Vector{0.0, static_cast<double>(s), 1.0};
  };
  spec.posenc.aux_symbol = 0;
  return spec;
}

} // namespace

TEST_CASE("encoding") {
  RngStream rng(61);
  TransformerSpec spec = small_spec(rng);
  SUBCASE("empty word with the auxiliary token") {
    const Matrix x = encode({}, spec, true);
    REQUIRE(x.rows() == 1);
    CHECK(x(0, 0) == 1.0);
    CHECK(x(0, 1) == 0.0);
    CHECK(x(0, 2) == 1.0);
  }
  SUBCASE("position plus symbol") {
    const std::vector<std::int64_t> w{4, 7};
    const Matrix x = encode(w, spec, true);
    REQUIRE(x.rows() == 3);
    CHECK(x(1, 0) == 2.0);
    CHECK(x(1, 1) == 7.0);
    CHECK(x(2, 0) == 3.0);
    CHECK(x(2, 1) == 0.0);
  }
  SUBCASE("zero positional part") {
    spec.posenc.position = [](std::size_t) { return Vector(3, 0.0); };
    const std::vector<std::int64_t> w{5, 5, 2};
    const Matrix x = encode(w, spec, false);
    CHECK(x.row_copy(0) == x.row_copy(1));
    CHECK(x(2, 1) == 2.0);
  }
  SUBCASE("unknown symbol") {
    const std::vector<std::int64_t> w{12};
    CHECK_THROWS_AS(encode(w, spec, false), std::out_of_range);
  }
  SUBCASE("function composition encoding") {
    const TransformerSpec fc = build_funccomp(3);
    const FuncCompInstance inst{{2, 3, 1}, {3, 1, 2}, 2};
    const std::vector<std::int64_t> word = funccomp_word(inst);
    const Matrix x = encode(word, fc, false);
    REQUIRE(x.cols() == 7);
    for (std::size_t t = 0; t < word.size(); ++t) {
      const double i = static_cast<double>(t + 1);
      const double phi = static_cast<double>(word[t]);
      const Vector expect{i, i * i, phi, phi * phi, 1.0, 0.0, 0.0};
      CHECK(x.row_copy(t) == expect);
    }
  }
}

TEST_CASE("forward pass") {
  RngStream rng(62);
  TransformerSpec spec = small_spec(rng);
  const Matrix x = random_matrix(5, 3, rng);

  SUBCASE("composition of head, W_O, residual and MLP") {
    const Matrix a = standard_attention(x, spec.heads[0]);
    const Matrix y = forward_full(x, spec);
    for (std::size_t i = 0; i < 5; ++i) {
      Vector z = x.row_copy(i);
      for (std::size_t r = 0; r < 3; ++r) z[r] += dot(spec.wo.row(r), a.row(i));
      const Vector e = mlp_eval(spec.mlp, z);
      CHECK(y(i, 0) == doctest::Approx(e[0]).epsilon(1e-14));
      CHECK(y(i, 1) == doctest::Approx(e[1]).epsilon(1e-14));
    }
    const Vector scalar = forward(x, spec);
    for (std::size_t i = 0; i < 5; ++i) CHECK(scalar[i] == y(i, 0));
  }
  SUBCASE("zero W_O leaves the MLP on the residual") {
    spec.wo = Matrix(3, 3);
    const Vector y = forward(x, spec);
    RngStream other(99);
    spec.heads[0] = AttentionParams::random(Mechanism::Standard, 3, 3, 5.0, other);
    CHECK(forward(x, spec) == y);
    for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == mlp_eval(spec.mlp, x.row(i))[0]);
  }
  SUBCASE("identity-like readout") {
    spec.mlp.layers.clear();
    MLPLayer id{Matrix(1, 3), Vector{0.0}};
    id.weight(0, 0) = 1.0;
    spec.mlp.layers.push_back(id);
    const Matrix res = residual_stream(x, spec);
    const Vector y = forward(x, spec);
    for (std::size_t i = 0; i < 5; ++i) CHECK(y[i] == res(i, 0));
  }
  SUBCASE("uniform heads ignore the order of other tokens") {
    spec.heads[0].weights[0] = Matrix(3, 3);
    Matrix xp = x;
    std::swap_ranges(xp.row(1).begin(), xp.row(1).end(), xp.row(3).begin());
    const Vector a = forward(x, spec);
    const Vector b = forward(xp, spec);
    CHECK(b[0] == doctest::Approx(a[0]).epsilon(1e-14));
    CHECK(b[2] == doctest::Approx(a[2]).epsilon(1e-14));
  }
  SUBCASE("finite at large inputs") {
    const Matrix big = scaled(x, 1e3);
    for (double v : forward(big, spec)) CHECK(std::isfinite(v));
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(forward(random_matrix(2, 4, rng), spec), ShapeError);
    spec.wo = Matrix(3, 2);
    CHECK_THROWS_AS(forward(x, spec), ShapeError);
  }
}

TEST_CASE("readouts") {
  CHECK(readout_sign(0.3) == 1);
  CHECK(readout_sign(-0.3) == 0);
  CHECK(readout_sign(0.0) == 0);
  CHECK(readout_nearest_int(2.4) == 2);
  CHECK(readout_nearest_int(2.5) == 3);
  CHECK(readout_nearest_int(-2.5) == -3);
}

TEST_CASE("size of a layer") {
  RngStream rng(63);
  const TransformerSpec spec = small_spec(rng);
  CHECK(spec.size() == 4 * 3 + 4 + 2 * 4 + 2);
}
