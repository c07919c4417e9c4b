#include "sattn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sattn {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
  }
}

// Copies the (r0, c0) block of size rows x cols out of `src`, reading zeros
// past the source bounds.
// Row-major block views with a leading dimension.
struct ConstView {
  const double* p;
  std::size_t ld;
  const double* row(std::size_t r) const { return p + r * ld; }
  ConstView block(std::size_t r0, std::size_t c0) const { return {p + r0 * ld + c0, ld}; }
};
struct View {
  double* p;
  std::size_t ld;
  double* row(std::size_t r) const { return p + r * ld; }
  View block(std::size_t r0, std::size_t c0) const { return {p + r0 * ld + c0, ld}; }
  operator ConstView() const { return {p, ld}; }
};

// out = a + sign * b on rows x cols.
void combine(View out, ConstView a, ConstView b, double sign, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.row(r);
    const double* x = a.row(r);
    const double* y = b.row(r);
    for (std::size_t c = 0; c < cols; ++c) o[c] = x[c] + sign * y[c];
  }
}

// out += sign * a; with `assign` set, out = a.
void accumulate(View out, ConstView a, double sign, bool assign, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.row(r);
    const double* x = a.row(r);
    if (assign)
      std::copy(x, x + cols, o);
    else
      for (std::size_t c = 0; c < cols; ++c) o[c] += sign * x[c];
  }
}

void base_product(ConstView a, ConstView b, View c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* out = c.row(i);
    std::fill(out, out + n, 0.0);
    const double* ar = a.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      const double aik = ar[t];
      const double* br = b.row(t);
      for (std::size_t j = 0; j < n; ++j) out[j] += aik * br[j];
    }
  }
}

// Per level l (1 = innermost recursive level) one buffer each for the left
// sum S, the right sum T and the product P, all of that level's half sizes.
struct StrassenWorkspace {
  std::vector<Matrix> s, t, p;
};

void strassen_kernel(std::size_t level, ConstView a, ConstView b, View c, std::size_t m, std::size_t k,
                     std::size_t n, StrassenWorkspace& ws) {
  if (level == 0) {
    base_product(a, b, c, m, k, n);
    return;
  }
  const std::size_t hm = m / 2;
  const std::size_t hk = k / 2;
  const std::size_t hn = n / 2;
  const View s{ws.s[level - 1].data().data(), hk};
  const View t{ws.t[level - 1].data().data(), hn};
  const View p{ws.p[level - 1].data().data(), hn};
  const ConstView a11 = a.block(0, 0), a12 = a.block(0, hk), a21 = a.block(hm, 0), a22 = a.block(hm, hk);
  const ConstView b11 = b.block(0, 0), b12 = b.block(0, hn), b21 = b.block(hk, 0), b22 = b.block(hk, hn);
  const View c11 = c.block(0, 0), c12 = c.block(0, hn), c21 = c.block(hm, 0), c22 = c.block(hm, hn);
  const auto product = [&](ConstView x, ConstView y) { strassen_kernel(level - 1, x, y, p, hm, hk, hn, ws); };

  combine(s, a11, a22, 1.0, hm, hk);
  combine(t, b11, b22, 1.0, hk, hn);
  product(s, t); // M1
  accumulate(c11, p, 1.0, true, hm, hn);
  accumulate(c22, p, 1.0, true, hm, hn);

  combine(s, a21, a22, 1.0, hm, hk);
  product(s, b11); // M2
  accumulate(c21, p, 1.0, true, hm, hn);
  accumulate(c22, p, -1.0, false, hm, hn);

  combine(t, b12, b22, -1.0, hk, hn);
  product(a11, t); // M3
  accumulate(c12, p, 1.0, true, hm, hn);
  accumulate(c22, p, 1.0, false, hm, hn);

  combine(t, b21, b11, -1.0, hk, hn);
  product(a22, t); // M4
  accumulate(c11, p, 1.0, false, hm, hn);
  accumulate(c21, p, 1.0, false, hm, hn);

  combine(s, a11, a12, 1.0, hm, hk);
  product(s, b22); // M5
  accumulate(c11, p, -1.0, false, hm, hn);
  accumulate(c12, p, 1.0, false, hm, hn);

  combine(s, a21, a11, -1.0, hm, hk);
  combine(t, b11, b12, 1.0, hk, hn);
  product(s, t); // M6
  accumulate(c22, p, 1.0, false, hm, hn);

  combine(s, a12, a22, -1.0, hm, hk);
  combine(t, b21, b22, 1.0, hk, hn);
  product(s, t); // M7
  accumulate(c11, p, 1.0, false, hm, hn);
}

void add_into(Matrix& dst, const Matrix& a, double sign = 1.0) {
  auto d = dst.data();
  auto s = a.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += sign * s[i];
}

Matrix zero_padded(const Matrix& src, std::size_t rows, std::size_t cols) {
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < src.rows(); ++r) std::copy(src.row(r).begin(), src.row(r).end(), out.row(r).begin());
  return out;
}

Matrix strassen_rec(const Matrix& a, const Matrix& b, std::size_t cutoff) {
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  std::size_t levels = 0;
  auto shrunk = [&](std::size_t dim) { return (dim + (std::size_t{1} << levels) - 1) >> levels; };
  while (std::min({shrunk(m), shrunk(k), shrunk(n)}) > cutoff) ++levels;
  if (levels == 0) return matmul(a, b);

  // Pad once so every dimension halves evenly down to the base level.
  const auto padded = [&](std::size_t dim) { return shrunk(dim) << levels; };
  const std::size_t pm = padded(m), pk = padded(k), pn = padded(n);
  StrassenWorkspace ws;
  for (std::size_t l = 1; l <= levels; ++l) {
    const std::size_t shift = levels - l + 1;
    const std::size_t hm = pm >> shift, hk = pk >> shift, hn = pn >> shift;
    ws.s.emplace_back(hm, hk);
    ws.t.emplace_back(hk, hn);
    ws.p.emplace_back(hm, hn);
  }
  const bool exact = pm == m && pk == k && pn == n;
  const Matrix ap = exact ? Matrix() : zero_padded(a, pm, pk);
  const Matrix bp = exact ? Matrix() : zero_padded(b, pk, pn);
  const Matrix& ua = exact ? a : ap;
  const Matrix& ub = exact ? b : bp;
  Matrix c(pm, pn);
  strassen_kernel(levels, {ua.data().data(), pk}, {ub.data().data(), pn}, {c.data().data(), pn}, pm, pk, pn, ws);
  if (exact) return c;
  Matrix out(m, n);
  for (std::size_t r = 0; r < m; ++r)
    std::copy(c.row(r).begin(), c.row(r).begin() + static_cast<std::ptrdiff_t>(n), out.row(r).begin());
  return out;
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::span<const double> values)
    : rows_(rows), cols_(cols), data_(values.begin(), values.end()) {
  if (values.size() != rows * cols) {
    throw ShapeError("Matrix: expected " + std::to_string(rows * cols) + " values, got " +
                     std::to_string(values.size()));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<Vector> tmp;
  tmp.reserve(rows.size());
  for (const auto& r : rows) tmp.emplace_back(r);
  return from_rows(tmp);
}

Matrix Matrix::from_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  Matrix out(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != out.cols()) throw ShapeError("Matrix::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), out.row(r).begin());
  }
  return out;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix Matrix::column(std::span<const double> values) { return Matrix(values.size(), 1, values); }

Matrix Matrix::row_vector(std::span<const double> values) { return Matrix(1, values.size(), values); }

Vector Matrix::row_copy(std::size_t r) const {
  auto s = row(r);
  return Vector(s.begin(), s.end());
}

Vector Matrix::column_copy(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + shape_of(a) + " times " + shape_of(b));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto brow = b.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_transposed: " + shape_of(a) + " times " + shape_of(b) + "^T");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

Matrix strassen_matmul(const Matrix& a, const Matrix& b, std::size_t cutoff) {
  if (a.cols() != b.rows()) throw ShapeError("strassen_matmul: " + shape_of(a) + " times " + shape_of(b));
  if (cutoff < 1) throw std::invalid_argument("strassen_matmul: cutoff must be >= 1");
  return strassen_rec(a, b, cutoff);
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  add_into(out, b);
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  add_into(out, b, -1.0);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto d = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= s[i];
  return out;
}

Matrix scaled(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

double frobenius_norm(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

double relative_frobenius_error(const Matrix& a, const Matrix& b) {
  const double denom = std::max(frobenius_norm(b), std::numeric_limits<double>::min());
  return frobenius_norm(subtract(a, b)) / denom;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Vector stable_softmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("stable_softmax: empty scores");
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores) {
    if (std::isnan(s) || s == std::numeric_limits<double>::infinity())
      throw std::invalid_argument("stable_softmax: scores must be finite or -inf");
    mx = std::max(mx, s);
  }
  if (mx == -std::numeric_limits<double>::infinity())
    throw std::invalid_argument("stable_softmax: every entry is masked");
  Vector out(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t MLPParams::input_dim() const {
  if (layers.empty()) throw ShapeError("MLPParams: no layers");
  return layers.front().weight.cols();
}

std::size_t MLPParams::output_dim() const {
  if (layers.empty()) throw ShapeError("MLPParams: no layers");
  return layers.back().weight.rows();
}

void MLPParams::validate() const {
  if (layers.empty()) throw ShapeError("MLPParams: no layers");
  for (std::size_t t = 0; t < layers.size(); ++t) {
    if (layers[t].bias.size() != layers[t].weight.rows())
      throw ShapeError("MLPParams: bias length does not match layer " + std::to_string(t));
    if (t + 1 < layers.size() && layers[t].weight.rows() != layers[t + 1].weight.cols())
      throw ShapeError("MLPParams: layer " + std::to_string(t) + " does not chain into the next");
  }
}

Vector mlp_eval(const MLPParams& params, std::span<const double> x) {
  params.validate();
  if (x.size() != params.input_dim())
    throw ShapeError("mlp_eval: input length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(params.input_dim()));
  Vector cur(x.begin(), x.end());
  for (std::size_t t = 0; t < params.layers.size(); ++t) {
    const auto& layer = params.layers[t];
    Vector next(layer.weight.rows());
    for (std::size_t o = 0; o < next.size(); ++o) {
      double v = layer.bias[o] + dot(layer.weight.row(o), cur);
      if (t + 1 < params.layers.size()) v = std::max(v, 0.0);
      next[o] = v;
    }
    cur = std::move(next);
  }
  return cur;
}

} // namespace sattn
