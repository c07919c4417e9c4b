#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sattn/tensor.hpp"

namespace sattn::ad {

enum class OpKind {
  Variable,
  Constant,
  MatMul,
  Transpose,
  Add,
  Sub,
  Hadamard,
  Scale,
  AddRow,
  Exp,
  Log,
  ReLU,
  Softplus,
  Div,
  Softmax,
  Sum,
  SumRows,
  Select,
  SliceCols,
  ConcatCols,
  PairSum,
  PairHadamard,
  TriScores,
  TriMix,
};

const char* op_name(OpKind kind) noexcept;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

/// Append-only record of a computation. Nodes are stored in creation order,
/// so every parent index is smaller than its child's and one reverse pass
/// visits them in a valid order.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var variable(Matrix value);
  /// Leaf that does not.
  Var constant(Matrix value);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  OpKind kind(Var v) const;
  std::span<const std::size_t> parents(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Builds a node from an op name and operand list. Names cover the
  /// operations that need no extra attributes ("matmul", "add", "sub",
  /// "hadamard", "div", "exp", "log", "relu", "softplus", "softmax", "sum",
  /// "sum_rows", "transpose", "pair_sum", "pair_hadamard"). Anything else
  /// throws UnsupportedOpError before a node is recorded.
  Var apply(std::string_view op, std::span<const Var> args);

  /// One reverse sweep from a 1x1 output. Returns d(output)/d(v) for each v
  /// in `wrt`, shaped like v.
  std::vector<Matrix> gradients(Var output, std::span<const Var> wrt) const;

private:
  friend struct NodeBuilder;

  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<std::size_t> parents;
    Matrix value;
    bool needs_grad = false;
    double scalar = 0.0;
    std::size_t extent = 0;
    std::vector<std::size_t> indices;
    std::vector<std::uint8_t> mask;
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void backward_node(const Node& n, const Matrix& g, std::vector<Matrix>& grads) const;

  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
/// Adds a 1 x c row to every row of an n x c operand.
Var add_row(Var a, Var row);
Var exp(Var a);
Var log(Var a);
Var relu(Var a);
/// log(1 + e^a), evaluated without overflow.
Var softplus(Var a);
/// Elementwise a / b; b may also be 1x1.
Var div(Var a, Var b);
/// Row-wise softmax. When `keep` is non-empty it has one byte per entry and
/// zero entries get probability exactly 0.
Var softmax_rows(Var a, std::vector<std::uint8_t> keep = {});
Var sum(Var a);
Var sum_rows(Var a);
/// Gathers rows by index; repeated indices accumulate in the backward pass.
Var select_rows(Var a, std::vector<std::size_t> rows);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);

/// T[i, j*n + k] = s1[i, j] + s2[j, k] + s3[k, i] for n x n operands.
Var pair_sum(Var s1, Var s2, Var s3);
/// P[j*n + k, c] = a[j, c] * b[k, c] for n x c operands.
Var pair_hadamard(Var a, Var b);
/// Grid tokens t = i*m + j. T[(i,j), l] = q[(i,l)] . k[(l,j)].
Var triangular_scores(Var q, Var k, std::size_t m);
/// out[(i,j)] = sum_l p[(i,j), l] * (v1[(i,l)] (.) v2[(l,j)]).
Var triangular_mix(Var p, Var v1, Var v2, std::size_t m);

/// A scalar computation over a parameter list. It must return a 1x1 node.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

double evaluate(const ScalarFn& f, std::span<const Matrix> params);

/// Gradient of f with respect to every parameter via one reverse sweep.
std::vector<Matrix> grad(const ScalarFn& f, std::span<const Matrix> params);

/// Largest relative disagreement between grad() and central differences,
/// using max(|analytic|, |numeric|, 1e-8) as the denominator.
double fd_check(const ScalarFn& f, std::span<const Matrix> params, double eps);

} // namespace sattn::ad
