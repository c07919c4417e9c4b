#include <doctest.h>

#include <cmath>
#include <limits>

#include "sattn/alloc_tracker.hpp"
#include "sattn/tensor.hpp"
#include "support.hpp"

using namespace sattn;
using sattn::test::random_matrix;

TEST_CASE("matmul small cases") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  CHECK(matmul(a, b) == Matrix::from_rows({{19, 22}, {43, 50}}));
  RngStream rng(1);
  const Matrix c = random_matrix(3, 3, rng);
  CHECK(matmul(Matrix::identity(3), c) == c);
  CHECK_THROWS_AS(matmul(a, Matrix(3, 2)), ShapeError);
}

TEST_CASE("strassen matches the plain product") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  CHECK(strassen_matmul(a, b, 1) == Matrix::from_rows({{19, 22}, {43, 50}}));
  CHECK(strassen_matmul(Matrix::from_rows({{3}}), Matrix::from_rows({{-4}}), 1) == Matrix::from_rows({{-12}}));

  RngStream rng(2);
  const Matrix x = random_matrix(64, 64, rng);
  const Matrix y = random_matrix(64, 64, rng);
  CHECK(max_abs_diff(strassen_matmul(x, y, 16), matmul(x, y)) < 1e-9);

  const Matrix p = random_matrix(256, 256, rng);
  const Matrix q = random_matrix(256, 256, rng);
  CHECK(relative_frobenius_error(strassen_matmul(p, q), matmul(p, q)) < 1e-10);

  CHECK_THROWS_AS(strassen_matmul(x, Matrix(3, 3)), ShapeError);
  CHECK_THROWS_AS(strassen_matmul(x, y, 0), std::invalid_argument);
}

TEST_CASE("strassen on odd and rectangular shapes") {
  RngStream rng(3);
  for (std::size_t m : {1, 5, 33, 130})
    for (std::size_t k : {2, 17, 129})
      for (std::size_t n : {1, 31, 70})
        for (std::size_t cutoff : {1, 4, 64}) {
          if (cutoff == 1 && m * k * n > 200000) continue;
          const Matrix a = random_matrix(m, k, rng);
          const Matrix b = random_matrix(k, n, rng);
          const Matrix s = strassen_matmul(a, b, cutoff);
          REQUIRE(s.rows() == m);
          REQUIRE(s.cols() == n);
          CHECK(relative_frobenius_error(s, matmul(a, b)) < 1e-12);
        }
}

TEST_CASE("strassen up to 512 and associativity") {
  RngStream rng(4);
  const Matrix a = random_matrix(512, 512, rng);
  const Matrix b = random_matrix(512, 512, rng);
  CHECK(relative_frobenius_error(strassen_matmul(a, b, 32), matmul(a, b)) < 1e-9);
  const Matrix x = random_matrix(64, 64, rng);
  const Matrix y = random_matrix(64, 64, rng);
  const Matrix z = random_matrix(64, 64, rng);
  CHECK(relative_frobenius_error(matmul(matmul(x, y), z), matmul(x, matmul(y, z))) < 1e-9);
}

TEST_CASE("stable softmax") {
  const Vector u = stable_softmax(std::vector<double>{0, 0, 0});
  for (double v : u) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Vector big = stable_softmax(std::vector<double>{1000, 0});
  CHECK(big[0] == 1.0);
  CHECK(big[1] == 0.0);

  const double inf = std::numeric_limits<double>::infinity();
  const Vector masked = stable_softmax(std::vector<double>{1.0, -inf, 2.0});
  CHECK(masked[1] == 0.0);
  CHECK(masked[0] + masked[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(stable_softmax(std::vector<double>{-inf, -inf}), std::invalid_argument);

  RngStream rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(7), shifted(7);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = rng.uniform(-20, 20);
      shifted[i] = s[i] + 17.5;
    }
    const Vector p = stable_softmax(s);
    const Vector q = stable_softmax(shifted);
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(std::abs(p[i] - q[i]) <= 1e-12);
      total += p[i];
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("mlp evaluation") {
  MLPParams relu_gate;
  relu_gate.layers.push_back({Matrix::from_rows({{-1.0}}), {1.5}});
  relu_gate.layers.push_back({Matrix::from_rows({{1.0}}), {0.0}});
  CHECK(mlp_eval(relu_gate, std::vector<double>{1.0})[0] == 0.5);
  CHECK(mlp_eval(relu_gate, std::vector<double>{2.0})[0] == 0.0);

  MLPParams zero;
  zero.layers.push_back({Matrix(2, 3), {0.25, -4.0}});
  const Vector out = mlp_eval(zero, std::vector<double>{7, 8, 9});
  CHECK(out == Vector{0.25, -4.0});

  MLPParams broken;
  broken.layers.push_back({Matrix(2, 3), {0, 0}});
  broken.layers.push_back({Matrix(1, 3), {0}});
  CHECK_THROWS_AS(broken.validate(), ShapeError);
  CHECK_THROWS_AS(mlp_eval(zero, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("allocation tracking") {
  alloc_tracker::reset_peak();
  const std::size_t before = alloc_tracker::current_bytes();
  {
    const Matrix m(100, 100);
    CHECK(alloc_tracker::current_bytes() - before == 100 * 100 * sizeof(double));
  }
  CHECK(alloc_tracker::current_bytes() == before);
  CHECK(alloc_tracker::peak_bytes() >= before + 100 * 100 * sizeof(double));
}

TEST_CASE("matrix construction") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Matrix::from_rows(std::vector<Vector>{{1, 2}, {3}}), ShapeError);
  const Matrix t = Matrix::from_rows({{1, 2, 3}}).transposed();
  CHECK(t.rows() == 3);
  CHECK(t(2, 0) == 3);
}
