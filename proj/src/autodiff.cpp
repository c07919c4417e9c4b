#include "sattn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sattn::ad {

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
  case OpKind::Variable: return "variable";
  case OpKind::Constant: return "constant";
  case OpKind::MatMul: return "matmul";
  case OpKind::Transpose: return "transpose";
  case OpKind::Add: return "add";
  case OpKind::Sub: return "sub";
  case OpKind::Hadamard: return "hadamard";
  case OpKind::Scale: return "scale";
  case OpKind::AddRow: return "add_row";
  case OpKind::Exp: return "exp";
  case OpKind::Log: return "log";
  case OpKind::ReLU: return "relu";
  case OpKind::Softplus: return "softplus";
  case OpKind::Div: return "div";
  case OpKind::Softmax: return "softmax";
  case OpKind::Sum: return "sum";
  case OpKind::SumRows: return "sum_rows";
  case OpKind::Select: return "select";
  case OpKind::SliceCols: return "slice_cols";
  case OpKind::ConcatCols: return "concat_cols";
  case OpKind::PairSum: return "pair_sum";
  case OpKind::PairHadamard: return "pair_hadamard";
  case OpKind::TriScores: return "triangular_scores";
  case OpKind::TriMix: return "triangular_mix";
  }
  return "unknown";
}

namespace {

Tape& owner(Var v) {
  if (v.tape == nullptr) throw std::invalid_argument("autodiff: unbound variable");
  return *v.tape;
}

Tape& common(std::initializer_list<Var> vs) {
  Tape* t = nullptr;
  for (Var v : vs) {
    if (v.tape == nullptr) throw std::invalid_argument("autodiff: unbound variable");
    if (t != nullptr && t != v.tape) throw std::invalid_argument("autodiff: operands from different tapes");
    t = v.tape;
  }
  return *t;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": operand shapes differ");
  }
}

void accumulate(Matrix& dst, const Matrix& src) {
  if (dst.empty() && src.size() != 0) {
    dst = src;
    return;
  }
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Matrix& slot(std::vector<Matrix>& grads, std::size_t id, const Matrix& like) {
  Matrix& g = grads[id];
  if (g.rows() != like.rows() || g.cols() != like.cols()) g = Matrix(like.rows(), like.cols());
  return g;
}

double softplus_value(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

} // namespace

struct NodeBuilder {
  static Var make(Tape& t, OpKind kind, std::initializer_list<Var> parents, Matrix value) {
    Tape::Node n;
    n.kind = kind;
    n.value = std::move(value);
    for (Var p : parents) {
      n.parents.push_back(p.id);
      n.needs_grad = n.needs_grad || t.nodes_[p.id].needs_grad;
    }
    return t.push(std::move(n));
  }
  static Tape::Node& last(Tape& t) { return t.nodes_.back(); }
  static Var make_many(Tape& t, OpKind kind, std::span<const Var> parents, Matrix value) {
    Tape::Node n;
    n.kind = kind;
    n.value = std::move(value);
    for (Var p : parents) {
      n.parents.push_back(p.id);
      n.needs_grad = n.needs_grad || t.nodes_[p.id].needs_grad;
    }
    return t.push(std::move(n));
  }
};

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this) throw std::invalid_argument("autodiff: variable belongs to another tape");
  if (v.id >= nodes_.size()) throw std::out_of_range("autodiff: node index out of range");
  return nodes_[v.id];
}

Var Tape::variable(Matrix value) {
  Node n;
  n.kind = OpKind::Variable;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar(Var v) const {
  const Matrix& m = node(v).value;
  if (m.rows() != 1 || m.cols() != 1) throw ShapeError("autodiff: value is not 1x1");
  return m(0, 0);
}

OpKind Tape::kind(Var v) const { return node(v).kind; }

std::span<const std::size_t> Tape::parents(Var v) const { return node(v).parents; }

Var Tape::apply(std::string_view op, std::span<const Var> args) {
  auto arity = [&](std::size_t k) {
    if (args.size() != k) {
      throw std::invalid_argument("autodiff: op '" + std::string(op) + "' expects " + std::to_string(k) +
                                  " operands");
    }
  };
  for (Var a : args) node(a);
  if (op == "matmul") { arity(2); return ad::matmul(args[0], args[1]); }
  if (op == "add") { arity(2); return ad::add(args[0], args[1]); }
  if (op == "sub") { arity(2); return ad::sub(args[0], args[1]); }
  if (op == "hadamard") { arity(2); return ad::hadamard(args[0], args[1]); }
  if (op == "div") { arity(2); return ad::div(args[0], args[1]); }
  if (op == "exp") { arity(1); return ad::exp(args[0]); }
  if (op == "log") { arity(1); return ad::log(args[0]); }
  if (op == "relu") { arity(1); return ad::relu(args[0]); }
  if (op == "softplus") { arity(1); return ad::softplus(args[0]); }
  if (op == "softmax") { arity(1); return ad::softmax_rows(args[0]); }
  if (op == "sum") { arity(1); return ad::sum(args[0]); }
  if (op == "sum_rows") { arity(1); return ad::sum_rows(args[0]); }
  if (op == "transpose") { arity(1); return ad::transpose(args[0]); }
  if (op == "pair_sum") { arity(3); return ad::pair_sum(args[0], args[1], args[2]); }
  if (op == "pair_hadamard") { arity(2); return ad::pair_hadamard(args[0], args[1]); }
  throw UnsupportedOpError("autodiff: unsupported op '" + std::string(op) + "'");
}

std::vector<Matrix> Tape::gradients(Var output, std::span<const Var> wrt) const {
  const Node& out = node(output);
  if (out.value.rows() != 1 || out.value.cols() != 1) throw ShapeError("autodiff: output must be 1x1");
  for (Var w : wrt) node(w);

  std::vector<Matrix> grads(output.id + 1);
  grads[output.id] = Matrix(1, 1, 1.0);
  for (std::size_t id = output.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (grads[id].empty() || !n.needs_grad || n.parents.empty()) continue;
    backward_node(n, grads[id], grads);
  }

  std::vector<Matrix> result;
  result.reserve(wrt.size());
  for (Var w : wrt) {
    const Matrix& v = nodes_[w.id].value;
    if (w.id < grads.size() && !grads[w.id].empty()) {
      result.push_back(grads[w.id]);
    } else {
      result.emplace_back(v.rows(), v.cols());
    }
  }
  return result;
}

void Tape::backward_node(const Node& n, const Matrix& g, std::vector<Matrix>& grads) const {
  auto pnode = [&](std::size_t k) -> const Node& { return nodes_[n.parents[k]]; };
  auto wants = [&](std::size_t k) { return pnode(k).needs_grad; };
  auto gslot = [&](std::size_t k) -> Matrix& { return slot(grads, n.parents[k], pnode(k).value); };

  switch (n.kind) {
  case OpKind::Variable:
  case OpKind::Constant:
    return;
  case OpKind::MatMul: {
    const Matrix& a = pnode(0).value;
    const Matrix& b = pnode(1).value;
    if (wants(0)) accumulate(gslot(0), matmul_transposed(g, b));
    if (wants(1)) accumulate(gslot(1), matmul(a.transposed(), g));
    return;
  }
  case OpKind::Transpose:
    if (wants(0)) accumulate(gslot(0), g.transposed());
    return;
  case OpKind::Add:
    if (wants(0)) accumulate(gslot(0), g);
    if (wants(1)) accumulate(gslot(1), g);
    return;
  case OpKind::Sub:
    if (wants(0)) accumulate(gslot(0), g);
    if (wants(1)) accumulate(gslot(1), scaled(g, -1.0));
    return;
  case OpKind::Hadamard:
    if (wants(0)) accumulate(gslot(0), sattn::hadamard(g, pnode(1).value));
    if (wants(1)) accumulate(gslot(1), sattn::hadamard(g, pnode(0).value));
    return;
  case OpKind::Scale:
    if (wants(0)) accumulate(gslot(0), scaled(g, n.scalar));
    return;
  case OpKind::AddRow: {
    if (wants(0)) accumulate(gslot(0), g);
    if (wants(1)) {
      Matrix& r = gslot(1);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t c = 0; c < g.cols(); ++c) r(0, c) += g(i, c);
    }
    return;
  }
  case OpKind::Exp:
    if (wants(0)) accumulate(gslot(0), sattn::hadamard(g, n.value));
    return;
  case OpKind::Log: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    const Matrix& a = pnode(0).value;
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += g.data()[i] / a.data()[i];
    return;
  }
  case OpKind::ReLU: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    const Matrix& a = pnode(0).value;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (a.data()[i] > 0) d.data()[i] += g.data()[i];
    }
    return;
  }
  case OpKind::Softplus: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    const Matrix& a = pnode(0).value;
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += g.data()[i] * sigmoid(a.data()[i]);
    return;
  }
  case OpKind::Div: {
    const Matrix& a = pnode(0).value;
    const Matrix& b = pnode(1).value;
    const bool scalar_b = b.size() == 1 && a.size() != 1;
    auto bval = [&](std::size_t i) { return scalar_b ? b.data()[0] : b.data()[i]; };
    if (wants(0)) {
      Matrix& d = gslot(0);
      for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += g.data()[i] / bval(i);
    }
    if (wants(1)) {
      Matrix& d = gslot(1);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double bi = bval(i);
        d.data()[scalar_b ? 0 : i] -= g.data()[i] * a.data()[i] / (bi * bi);
      }
    }
    return;
  }
  case OpKind::Softmax: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    const Matrix& p = n.value;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      const double inner = dot(g.row(i), p.row(i));
      for (std::size_t j = 0; j < p.cols(); ++j) d(i, j) += p(i, j) * (g(i, j) - inner);
    }
    return;
  }
  case OpKind::Sum: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    for (double& v : d.data()) v += g(0, 0);
    return;
  }
  case OpKind::SumRows: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += g(i, 0);
    return;
  }
  case OpKind::Select: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    for (std::size_t r = 0; r < n.indices.size(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) d(n.indices[r], c) += g(r, c);
    return;
  }
  case OpKind::SliceCols: {
    if (!wants(0)) return;
    Matrix& d = gslot(0);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) d(r, n.extent + c) += g(r, c);
    return;
  }
  case OpKind::ConcatCols: {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      const Matrix& part = pnode(k).value;
      if (wants(k)) {
        Matrix& d = gslot(k);
        for (std::size_t r = 0; r < part.rows(); ++r)
          for (std::size_t c = 0; c < part.cols(); ++c) d(r, c) += g(r, offset + c);
      }
      offset += part.cols();
    }
    return;
  }
  case OpKind::PairSum: {
    const std::size_t m = n.extent;
    Matrix d1(m, m), d2(m, m), d3(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < m; ++k) {
          const double v = g(i, j * m + k);
          d1(i, j) += v;
          d2(j, k) += v;
          d3(k, i) += v;
        }
    if (wants(0)) accumulate(gslot(0), d1);
    if (wants(1)) accumulate(gslot(1), d2);
    if (wants(2)) accumulate(gslot(2), d3);
    return;
  }
  case OpKind::PairHadamard: {
    const Matrix& a = pnode(0).value;
    const Matrix& b = pnode(1).value;
    const std::size_t m = a.rows();
    Matrix da(a.rows(), a.cols()), db(b.rows(), b.cols());
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t c = 0; c < a.cols(); ++c) {
          const double v = g(j * m + k, c);
          da(j, c) += v * b(k, c);
          db(k, c) += v * a(j, c);
        }
    if (wants(0)) accumulate(gslot(0), da);
    if (wants(1)) accumulate(gslot(1), db);
    return;
  }
  case OpKind::TriScores: {
    const Matrix& q = pnode(0).value;
    const Matrix& k = pnode(1).value;
    const std::size_t m = n.extent;
    Matrix dq(q.rows(), q.cols()), dk(k.rows(), k.cols());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t l = 0; l < m; ++l) {
          const double v = g(i * m + j, l);
          if (v == 0.0) continue;
          for (std::size_t c = 0; c < q.cols(); ++c) {
            dq(i * m + l, c) += v * k(l * m + j, c);
            dk(l * m + j, c) += v * q(i * m + l, c);
          }
        }
    if (wants(0)) accumulate(gslot(0), dq);
    if (wants(1)) accumulate(gslot(1), dk);
    return;
  }
  case OpKind::TriMix: {
    const Matrix& p = pnode(0).value;
    const Matrix& v1 = pnode(1).value;
    const Matrix& v2 = pnode(2).value;
    const std::size_t m = n.extent;
    const std::size_t cdim = v1.cols();
    Matrix dp(p.rows(), p.cols()), dv1(v1.rows(), v1.cols()), dv2(v2.rows(), v2.cols());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t t = i * m + j;
        for (std::size_t l = 0; l < m; ++l) {
          const std::size_t a = i * m + l;
          const std::size_t b = l * m + j;
          const double w = p(t, l);
          double acc = 0.0;
          for (std::size_t c = 0; c < cdim; ++c) {
            acc += g(t, c) * v1(a, c) * v2(b, c);
            dv1(a, c) += w * g(t, c) * v2(b, c);
            dv2(b, c) += w * g(t, c) * v1(a, c);
          }
          dp(t, l) += acc;
        }
      }
    if (wants(0)) accumulate(gslot(0), dp);
    if (wants(1)) accumulate(gslot(1), dv1);
    if (wants(2)) accumulate(gslot(2), dv2);
    return;
  }
  }
}

Var matmul(Var a, Var b) {
  Tape& t = common({a, b});
  return NodeBuilder::make(t, OpKind::MatMul, {a, b}, sattn::matmul(t.value(a), t.value(b)));
}

Var transpose(Var a) {
  Tape& t = owner(a);
  return NodeBuilder::make(t, OpKind::Transpose, {a}, t.value(a).transposed());
}

Var add(Var a, Var b) {
  Tape& t = common({a, b});
  require_same_shape(t.value(a), t.value(b), "add");
  return NodeBuilder::make(t, OpKind::Add, {a, b}, sattn::add(t.value(a), t.value(b)));
}

Var sub(Var a, Var b) {
  Tape& t = common({a, b});
  require_same_shape(t.value(a), t.value(b), "sub");
  return NodeBuilder::make(t, OpKind::Sub, {a, b}, subtract(t.value(a), t.value(b)));
}

Var hadamard(Var a, Var b) {
  Tape& t = common({a, b});
  require_same_shape(t.value(a), t.value(b), "hadamard");
  return NodeBuilder::make(t, OpKind::Hadamard, {a, b}, sattn::hadamard(t.value(a), t.value(b)));
}

Var scale(Var a, double s) {
  Tape& t = owner(a);
  Var v = NodeBuilder::make(t, OpKind::Scale, {a}, scaled(t.value(a), s));
  NodeBuilder::last(t).scalar = s;
  return v;
}

Var add_row(Var a, Var row) {
  Tape& t = common({a, row});
  const Matrix& x = t.value(a);
  const Matrix& r = t.value(row);
  if (r.rows() != 1 || r.cols() != x.cols()) throw ShapeError("add_row: row must be 1 x cols");
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += r(0, c);
  return NodeBuilder::make(t, OpKind::AddRow, {a, row}, std::move(out));
}

namespace {
template <class F>
Var unary(Var a, OpKind kind, F f) {
  Tape& t = owner(a);
  Matrix out = t.value(a);
  for (double& v : out.data()) v = f(v);
  return NodeBuilder::make(t, kind, {a}, std::move(out));
}
} // namespace

Var exp(Var a) { return unary(a, OpKind::Exp, [](double v) { return std::exp(v); }); }
Var log(Var a) { return unary(a, OpKind::Log, [](double v) { return std::log(v); }); }
Var relu(Var a) { return unary(a, OpKind::ReLU, [](double v) { return v > 0 ? v : 0.0; }); }
Var softplus(Var a) { return unary(a, OpKind::Softplus, softplus_value); }

Var div(Var a, Var b) {
  Tape& t = common({a, b});
  const Matrix& x = t.value(a);
  const Matrix& y = t.value(b);
  Matrix out = x;
  if (y.size() == 1) {
    for (double& v : out.data()) v /= y(0, 0);
  } else {
    require_same_shape(x, y, "div");
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] /= y.data()[i];
  }
  return NodeBuilder::make(t, OpKind::Div, {a, b}, std::move(out));
}

Var softmax_rows(Var a, std::vector<std::uint8_t> keep) {
  Tape& t = owner(a);
  const Matrix& x = t.value(a);
  if (!keep.empty() && keep.size() != x.size()) throw ShapeError("softmax_rows: mask size mismatch");
  Matrix out(x.rows(), x.cols());
  Vector row(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const bool on = keep.empty() || keep[i * x.cols() + j] != 0;
      row[j] = on ? x(i, j) : -std::numeric_limits<double>::infinity();
    }
    const Vector p = stable_softmax(row);
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = p[j];
  }
  Var v = NodeBuilder::make(t, OpKind::Softmax, {a}, std::move(out));
  NodeBuilder::last(t).mask = std::move(keep);
  return v;
}

Var sum(Var a) {
  Tape& t = owner(a);
  double s = 0.0;
  for (double v : t.value(a).data()) s += v;
  return NodeBuilder::make(t, OpKind::Sum, {a}, Matrix(1, 1, s));
}

Var sum_rows(Var a) {
  Tape& t = owner(a);
  const Matrix& x = t.value(a);
  Matrix out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    out(i, 0) = s;
  }
  return NodeBuilder::make(t, OpKind::SumRows, {a}, std::move(out));
}

Var select_rows(Var a, std::vector<std::size_t> rows) {
  Tape& t = owner(a);
  const Matrix& x = t.value(a);
  Matrix out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.rows()) throw std::out_of_range("select_rows: index out of range");
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(rows[r], c);
  }
  Var v = NodeBuilder::make(t, OpKind::Select, {a}, std::move(out));
  NodeBuilder::last(t).indices = std::move(rows);
  return v;
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = owner(a);
  const Matrix& x = t.value(a);
  if (begin > end || end > x.cols()) throw std::out_of_range("slice_cols: bad column range");
  Matrix out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x(r, c);
  Var v = NodeBuilder::make(t, OpKind::SliceCols, {a}, std::move(out));
  NodeBuilder::last(t).extent = begin;
  return v;
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape& t = owner(parts[0]);
  std::size_t rows = 0, cols = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (parts[k].tape != &t) throw std::invalid_argument("autodiff: operands from different tapes");
    const Matrix& p = t.value(parts[k]);
    if (k == 0) rows = p.rows();
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& x = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) out(r, offset + c) = x(r, c);
    offset += x.cols();
  }
  return NodeBuilder::make_many(t, OpKind::ConcatCols, parts, std::move(out));
}

Var pair_sum(Var s1, Var s2, Var s3) {
  Tape& t = common({s1, s2, s3});
  const Matrix& a = t.value(s1);
  const Matrix& b = t.value(s2);
  const Matrix& c = t.value(s3);
  const std::size_t m = a.rows();
  for (const Matrix* x : {&a, &b, &c}) {
    if (x->rows() != m || x->cols() != m) throw ShapeError("pair_sum: operands must be n x n");
  }
  Matrix out(m, m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) out(i, j * m + k) = a(i, j) + b(j, k) + c(k, i);
  Var v = NodeBuilder::make(t, OpKind::PairSum, {s1, s2, s3}, std::move(out));
  NodeBuilder::last(t).extent = m;
  return v;
}

Var pair_hadamard(Var a, Var b) {
  Tape& t = common({a, b});
  const Matrix& x = t.value(a);
  const Matrix& y = t.value(b);
  require_same_shape(x, y, "pair_hadamard");
  const std::size_t m = x.rows();
  Matrix out(m * m, x.cols());
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t c = 0; c < x.cols(); ++c) out(j * m + k, c) = x(j, c) * y(k, c);
  return NodeBuilder::make(t, OpKind::PairHadamard, {a, b}, std::move(out));
}

Var triangular_scores(Var q, Var k, std::size_t m) {
  Tape& t = common({q, k});
  const Matrix& a = t.value(q);
  const Matrix& b = t.value(k);
  require_same_shape(a, b, "triangular_scores");
  if (a.rows() != m * m) throw ShapeError("triangular_scores: expected m*m tokens");
  Matrix out(m * m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t l = 0; l < m; ++l) out(i * m + j, l) = dot(a.row(i * m + l), b.row(l * m + j));
  Var v = NodeBuilder::make(t, OpKind::TriScores, {q, k}, std::move(out));
  NodeBuilder::last(t).extent = m;
  return v;
}

Var triangular_mix(Var p, Var v1, Var v2, std::size_t m) {
  Tape& t = common({p, v1, v2});
  const Matrix& w = t.value(p);
  const Matrix& a = t.value(v1);
  const Matrix& b = t.value(v2);
  require_same_shape(a, b, "triangular_mix");
  if (a.rows() != m * m || w.rows() != m * m || w.cols() != m) throw ShapeError("triangular_mix: bad shapes");
  Matrix out(m * m, a.cols());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t l = 0; l < m; ++l) {
        const double wt = w(i * m + j, l);
        for (std::size_t c = 0; c < a.cols(); ++c) out(i * m + j, c) += wt * a(i * m + l, c) * b(l * m + j, c);
      }
  Var v = NodeBuilder::make(t, OpKind::TriMix, {p, v1, v2}, std::move(out));
  NodeBuilder::last(t).extent = m;
  return v;
}

double evaluate(const ScalarFn& f, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Matrix& p : params) vars.push_back(tape.variable(p));
  return tape.scalar(f(tape, vars));
}

std::vector<Matrix> grad(const ScalarFn& f, std::span<const Matrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Matrix& p : params) vars.push_back(tape.variable(p));
  const Var out = f(tape, vars);
  return tape.gradients(out, vars);
}

double fd_check(const ScalarFn& f, std::span<const Matrix> params, double eps) {
  if (!(eps > 0.0) || eps > 1e-2) throw std::invalid_argument("fd_check: eps must lie in (0, 1e-2]");
  const std::vector<Matrix> analytic = grad(f, params);
  std::vector<Matrix> work(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double saved = work[p].data()[i];
      work[p].data()[i] = saved + eps;
      const double up = evaluate(f, work);
      work[p].data()[i] = saved - eps;
      const double down = evaluate(f, work);
      work[p].data()[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

} // namespace sattn::ad
