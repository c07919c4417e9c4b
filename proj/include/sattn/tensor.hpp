#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "sattn/alloc_tracker.hpp"
#include "sattn/errors.hpp"

namespace sattn {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
  using Storage = std::vector<double, TrackingAllocator<double>>;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::span<const double> values);

  /// Builds from nested row lists; all rows must have equal length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix from_rows(const std::vector<Vector>& rows);
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Vector row_copy(std::size_t r) const;
  Vector column_copy(std::size_t c) const;

  Matrix transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Storage data_;
};

inline constexpr std::size_t kDefaultStrassenCutoff = 64;

/// Plain i-k-j triple loop. Throws ShapeError when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

/// Strassen's seven-product recursion. Once the smallest of the three
/// dimensions is at most `cutoff` the block is multiplied with a plain loop.
/// Operands are zero padded once, each dimension to a multiple of 2^levels,
/// and the recursion runs on views with one scratch set per level.
Matrix strassen_matmul(const Matrix& a, const Matrix& b, std::size_t cutoff = kDefaultStrassenCutoff);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);

double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// ||a - b||_F / max(||b||_F, tiny).
double relative_frobenius_error(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);

/// Softmax with max subtraction. Entries may be -inf (masked, mapped to 0);
/// an all -inf input throws std::invalid_argument.
Vector stable_softmax(std::span<const double> scores);

/// Affine layers with ReLU between them and none after the last.
struct MLPLayer {
  Matrix weight; // out x in
  Vector bias;   // out
};

struct MLPParams {
  std::vector<MLPLayer> layers;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  /// Throws ShapeError if consecutive layers do not chain.
  void validate() const;
};

Vector mlp_eval(const MLPParams& params, std::span<const double> x);

} // namespace sattn
