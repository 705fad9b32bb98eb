// SPDX-License-Identifier: Apache-2.0
#include "gibbsnet/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace gibbsnet::ad {

namespace {

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

void check_same_tape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw DataError("detached input");
  }
}

void check_binary_shapes(const Matrix& a, const Matrix& b, const char* op) {
  if (is_scalar(a) || is_scalar(b)) return;
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DataError(std::string("shape mismatch in ") + op + ": " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}

// Expands a 1x1 operand to the other operand's shape.
Matrix expand(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Matrix::Constant(rows, cols, m(0, 0));
}

// Reduces a gradient back to a (possibly broadcast) operand's shape.
Matrix reduce_to(const Matrix& g, const Matrix& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
  return Matrix::Constant(1, 1, g.sum());
}

template <class Fn>
Matrix unary_map(const Matrix& a, Fn fn) {
  return a.unaryExpr(fn);
}

// Vectorized sigmoid family; exp(-x) overflowing to inf still gives s = 0.
using Array = Eigen::ArrayXXd;

Array sigmoid_array(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse(); }

Matrix silu_array(const Matrix& x) { return (x.array() * sigmoid_array(x)).matrix(); }

Matrix silu_d1_array(const Matrix& x) {
  const Array s = sigmoid_array(x);
  return (s * (1.0 + x.array() * (1.0 - s))).matrix();
}

Matrix silu_d2_array(const Matrix& x) {
  const Array s = sigmoid_array(x);
  return (s * (1.0 - s) * (2.0 + x.array() * (1.0 - 2.0 * s))).matrix();
}

Matrix silu_d3_array(const Matrix& x) {
  const Array s = sigmoid_array(x);
  const Array t = 1.0 - 2.0 * s;
  const Array xs = x.array();
  return (s * (1.0 - s) * (t * (3.0 + xs * t) - 2.0 * xs * s * (1.0 - s))).matrix();
}

}  // namespace

double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu_value(double x) { return x * sigmoid_value(x); }

double silu_d1_value(double x) {
  const double s = sigmoid_value(x);
  return s * (1.0 + x * (1.0 - s));
}

double silu_d2_value(double x) {
  const double s = sigmoid_value(x);
  return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
}

double silu_d3_value(double x) {
  const double s = sigmoid_value(x);
  const double t = 1.0 - 2.0 * s;
  return s * (1.0 - s) * (t * (3.0 + x * t) - 2.0 * x * s * (1.0 - s));
}

double softplus_value(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& m = value();
  if (!is_scalar(m)) throw DataError("scalar() on a non-scalar node");
  return m(0, 0);
}

Var Tape::push(Op op, Matrix value, std::int32_t a, std::int32_t b, double c, std::int32_t aux) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = c;
  n.aux = aux;
  n.value = std::move(value);
  if (op == Op::Leaf) {
    n.grad = true;
  } else if (op != Op::Const) {
    n.grad = (a >= 0 && nodes_[a].grad) || (b >= 0 && nodes_[b].grad);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::variable(Matrix value) { return push(Op::Leaf, std::move(value)); }
Var Tape::variable(double value) { return push(Op::Leaf, Matrix::Constant(1, 1, value)); }
Var Tape::constant(Matrix value) { return push(Op::Const, std::move(value)); }
Var Tape::constant(double value) { return push(Op::Const, Matrix::Constant(1, 1, value)); }

std::int32_t Tape::store_indices(std::vector<std::int32_t> idx) {
  index_store_.push_back(std::move(idx));
  return static_cast<std::int32_t>(index_store_.size() - 1);
}

std::int32_t Tape::store_sparse(SparseMatrix m) {
  sparse_store_.push_back(std::move(m));
  return static_cast<std::int32_t>(sparse_store_.size() - 1);
}

const Matrix& Tape::value(Var v) const {
  if (!contains(v)) throw DataError("detached input");
  return nodes_[v.id()].value;
}

bool Tape::needs_grad(Var v) const { return contains(v) && nodes_[v.id()].grad; }

Matrix& Tape::adj_ref(std::int32_t id) {
  Node& n = nodes_[id];
  if (n.adj.size() == 0) n.adj = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adj;
}

void Tape::accumulate(std::int32_t id, Matrix g) {
  if (id < 0 || !nodes_[id].grad) return;
  Node& n = nodes_[id];
  if (g.rows() == n.value.rows() && g.cols() == n.value.cols()) {
    if (n.adj.size() == 0) {
      n.adj = std::move(g);
    } else {
      n.adj += g;
    }
    return;
  }
  adj_ref(id) += reduce_to(g, n.value);
}

void Tape::backward(Var out) {
  if (!contains(out)) throw DataError("detached input");
  const Matrix& v = nodes_[out.id()].value;
  backward(out, Matrix::Ones(v.rows(), v.cols()));
}

void Tape::backward(Var out, const Matrix& seed) {
  if (!contains(out)) throw DataError("detached input");
  if (swept_) throw DataError("tape already swept; call zero_adjoints() first");
  swept_ = true;
  if (!nodes_[out.id()].grad) return;
  adj_ref(out.id()) += seed;
  for (std::int32_t i = out.id(); i >= 0; --i) {
    const Node& n = nodes_[i];
    if (!n.grad || n.adj.size() == 0 || n.op == Op::Leaf) continue;
    propagate(i);
  }
}

Matrix Tape::adjoint(Var v) const {
  if (!contains(v)) throw DataError("detached input");
  const Node& n = nodes_[v.id()];
  if (n.adj.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adj;
}

void Tape::zero_adjoints() {
  for (Node& n : nodes_) n.adj.resize(0, 0);
  swept_ = false;
}

void Tape::reset() {
  nodes_.clear();
  index_store_.clear();
  sparse_store_.clear();
  swept_ = false;
}

void Tape::propagate(std::int32_t id) {
  // Parents always precede the child, so `n` and `g` stay valid while
  // parent adjoints are written.
  const Node& n = nodes_[id];
  const Matrix& g = n.adj;
  const Matrix& y = n.value;
  const std::int32_t a = n.a;
  const std::int32_t b = n.b;
  auto va = [&]() -> const Matrix& { return nodes_[a].value; };
  auto vb = [&]() -> const Matrix& { return nodes_[b].value; };
  if (!(a >= 0 && nodes_[a].grad) && !(b >= 0 && nodes_[b].grad)) return;
  // g times an operand that may be a broadcast 1x1.
  auto times = [&](const Matrix& o) { return is_scalar(o) && !is_scalar(g) ? Matrix(o(0, 0) * g) : Matrix(g.cwiseProduct(o)); };

  switch (n.op) {
    case Op::Leaf:
    case Op::Const:
      break;
    case Op::Add:
      accumulate(a, g);
      accumulate(b, g);
      break;
    case Op::Sub:
      accumulate(a, g);
      accumulate(b, -g);
      break;
    case Op::Mul:
      if (nodes_[a].grad) accumulate(a, times(vb()));
      if (nodes_[b].grad) accumulate(b, times(va()));
      break;
    case Op::Div: {
      const Matrix eb = expand(vb(), y.rows(), y.cols());
      if (nodes_[a].grad) accumulate(a, g.cwiseQuotient(eb));
      if (nodes_[b].grad) accumulate(b, -g.cwiseProduct(y).cwiseQuotient(eb));
      break;
    }
    case Op::Neg:
      accumulate(a, -g);
      break;
    case Op::Scale:
      accumulate(a, n.c * g);
      break;
    case Op::AddScalar:
      accumulate(a, g);
      break;
    case Op::MatMul:
      if (nodes_[a].grad) accumulate(a, g * vb().transpose());
      if (nodes_[b].grad) accumulate(b, va().transpose() * g);
      break;
    case Op::SparseMatMul:
      accumulate(a, Matrix(sparse_store_[n.aux].transpose() * g));
      break;
    case Op::AddRowBroadcast:
      accumulate(a, g);
      if (nodes_[b].grad) accumulate(b, g.colwise().sum());
      break;
    case Op::MulColBroadcast: {
      const Matrix& c = vb();
      if (nodes_[a].grad) accumulate(a, g.array().colwise() * c.col(0).array());
      if (nodes_[b].grad) accumulate(b, g.cwiseProduct(va()).rowwise().sum());
      break;
    }
    case Op::Exp:
      accumulate(a, g.cwiseProduct(y));
      break;
    case Op::Log:
      accumulate(a, g.cwiseQuotient(va()));
      break;
    case Op::Sqrt:
      accumulate(a, g.cwiseQuotient(2.0 * y));
      break;
    case Op::Square:
      accumulate(a, 2.0 * g.cwiseProduct(va()));
      break;
    case Op::Abs:
      accumulate(a, g.cwiseProduct(unary_map(va(), [](double x) { return x >= 0.0 ? 1.0 : -1.0; })));
      break;
    case Op::Sigmoid:
      accumulate(a, g.cwiseProduct(unary_map(y, [](double s) { return s * (1.0 - s); })));
      break;
    case Op::Silu:
      accumulate(a, g.cwiseProduct(silu_d1_array(va())));
      break;
    case Op::SiluD1:
      accumulate(a, g.cwiseProduct(silu_d2_array(va())));
      break;
    case Op::SiluD2:
      accumulate(a, g.cwiseProduct(silu_d3_array(va())));
      break;
    case Op::Relu:
    case Op::Hinge:
      accumulate(a, g.cwiseProduct(unary_map(va(), [](double x) { return x > 0.0 ? 1.0 : 0.0; })));
      break;
    case Op::Softplus:
      accumulate(a, g.cwiseProduct(unary_map(va(), sigmoid_value)));
      break;
    case Op::Sum:
      accumulate(a, Matrix::Constant(va().rows(), va().cols(), g(0, 0)));
      break;
    case Op::RowSum:
      accumulate(a, g.col(0).replicate(1, va().cols()));
      break;
    case Op::ColSum:
      accumulate(a, g.row(0).replicate(va().rows(), 1));
      break;
    case Op::GatherRows: {
      if (!nodes_[a].grad) break;
      const auto& idx = index_store_[n.aux];
      Matrix& adj = adj_ref(a);
      for (std::size_t r = 0; r < idx.size(); ++r) adj.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
      break;
    }
    case Op::PermuteCols: {
      if (!nodes_[a].grad) break;
      const auto& idx = index_store_[n.aux];
      Matrix& adj = adj_ref(a);
      for (std::size_t c = 0; c < idx.size(); ++c) adj.col(idx[c]) += g.col(static_cast<Eigen::Index>(c));
      break;
    }
    case Op::Cols: {
      if (!nodes_[a].grad) break;
      Matrix& adj = adj_ref(a);
      adj.middleCols(static_cast<Eigen::Index>(n.c), g.cols()) += g;
      break;
    }
    case Op::HCat: {
      const Eigen::Index ca = va().cols();
      accumulate(a, g.leftCols(ca));
      accumulate(b, g.rightCols(g.cols() - ca));
      break;
    }
    case Op::Minimum:
    case Op::Maximum: {
      const bool is_min = n.op == Op::Minimum;
      Matrix ga = Matrix::Zero(y.rows(), y.cols());
      Matrix gb = Matrix::Zero(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const bool pick_a = is_min ? va()(i) <= vb()(i) : va()(i) >= vb()(i);
        (pick_a ? ga : gb)(i) = g(i);
      }
      accumulate(a, ga);
      accumulate(b, gb);
      break;
    }
    case Op::RowMin: {
      if (!nodes_[a].grad) break;
      Matrix& adj = adj_ref(a);
      const Matrix& x = va();
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::Index arg = 0;
        x.row(r).minCoeff(&arg);
        adj(r, arg) += g(r, 0);
      }
      break;
    }
    case Op::Transpose:
      accumulate(a, g.transpose());
      break;
    case Op::Reshape:
      accumulate(a, g.reshaped(va().rows(), va().cols()));
      break;
  }
}

Var operator+(Var a, Var b) {
  check_same_tape(a, b);
  check_binary_shapes(a.value(), b.value(), "add");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out = is_scalar(x) && !is_scalar(y) ? Matrix((y.array() + x(0, 0)).matrix())
               : is_scalar(y) && !is_scalar(x) ? Matrix((x.array() + y(0, 0)).matrix())
                                               : Matrix(x + y);
  return a.tape()->push(Op::Add, std::move(out), a.id(), b.id());
}

Var operator-(Var a, Var b) {
  check_same_tape(a, b);
  check_binary_shapes(a.value(), b.value(), "sub");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out = is_scalar(x) && !is_scalar(y) ? Matrix((x(0, 0) - y.array()).matrix())
               : is_scalar(y) && !is_scalar(x) ? Matrix((x.array() - y(0, 0)).matrix())
                                               : Matrix(x - y);
  return a.tape()->push(Op::Sub, std::move(out), a.id(), b.id());
}

Var operator*(Var a, Var b) {
  check_same_tape(a, b);
  check_binary_shapes(a.value(), b.value(), "mul");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out = is_scalar(x) && !is_scalar(y) ? Matrix(x(0, 0) * y)
               : is_scalar(y) && !is_scalar(x) ? Matrix(y(0, 0) * x)
                                               : Matrix(x.cwiseProduct(y));
  return a.tape()->push(Op::Mul, std::move(out), a.id(), b.id());
}

Var operator/(Var a, Var b) {
  check_same_tape(a, b);
  check_binary_shapes(a.value(), b.value(), "div");
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out = is_scalar(x) && !is_scalar(y) ? Matrix((x(0, 0) / y.array()).matrix())
               : is_scalar(y) && !is_scalar(x) ? Matrix(x / y(0, 0))
                                               : Matrix(x.cwiseQuotient(y));
  return a.tape()->push(Op::Div, std::move(out), a.id(), b.id());
}

Var operator-(Var a) { return a.tape()->push(Op::Neg, -a.value(), a.id()); }
Var operator+(Var a, double c) {
  return a.tape()->push(Op::AddScalar, (a.value().array() + c).matrix(), a.id(), -1, c);
}
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-a) + c; }
Var operator*(Var a, double c) { return a.tape()->push(Op::Scale, a.value() * c, a.id(), -1, c); }
Var operator*(double c, Var a) { return a * c; }
Var operator/(Var a, double c) { return a * (1.0 / c); }
Var operator/(double c, Var a) { return a.tape()->constant(c) / a; }

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw DataError("shape mismatch in matmul");
  Matrix out = a.value() * b.value();
  return a.tape()->push(Op::MatMul, std::move(out), a.id(), b.id());
}

Var sparse_matmul(const SparseMatrix& m, Var a) {
  if (m.cols() != a.rows()) throw DataError("shape mismatch in sparse_matmul");
  Tape* t = a.tape();
  Matrix out = m * a.value();
  const std::int32_t aux = t->store_sparse(m);
  return t->push(Op::SparseMatMul, std::move(out), a.id(), -1, 0.0, aux);
}

Var add_row(Var a, Var b) {
  check_same_tape(a, b);
  if (b.rows() != 1 || b.cols() != a.cols()) throw DataError("shape mismatch in add_row");
  Matrix out = a.value().rowwise() + b.value().row(0);
  return a.tape()->push(Op::AddRowBroadcast, std::move(out), a.id(), b.id());
}

Var mul_col(Var a, Var c) {
  check_same_tape(a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) throw DataError("shape mismatch in mul_col");
  Matrix out = a.value().array().colwise() * c.value().col(0).array();
  return a.tape()->push(Op::MulColBroadcast, std::move(out), a.id(), c.id());
}

Var exp(Var a) { return a.tape()->push(Op::Exp, a.value().array().exp().matrix(), a.id()); }

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw NumericalError("domain");
  return a.tape()->push(Op::Log, a.value().array().log().matrix(), a.id());
}

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) throw NumericalError("domain");
  return a.tape()->push(Op::Sqrt, a.value().array().sqrt().matrix(), a.id());
}

Var square(Var a) { return a.tape()->push(Op::Square, a.value().array().square().matrix(), a.id()); }
Var abs(Var a) { return a.tape()->push(Op::Abs, a.value().cwiseAbs(), a.id()); }
Var sigmoid(Var a) { return a.tape()->push(Op::Sigmoid, unary_map(a.value(), sigmoid_value), a.id()); }
Var silu(Var a) { return a.tape()->push(Op::Silu, silu_array(a.value()), a.id()); }
Var silu_d1(Var a) { return a.tape()->push(Op::SiluD1, silu_d1_array(a.value()), a.id()); }
Var silu_d2(Var a) { return a.tape()->push(Op::SiluD2, silu_d2_array(a.value()), a.id()); }
Var relu(Var a) { return a.tape()->push(Op::Relu, a.value().cwiseMax(0.0), a.id()); }
Var softplus(Var a) { return a.tape()->push(Op::Softplus, unary_map(a.value(), softplus_value), a.id()); }
Var hinge(Var a) { return a.tape()->push(Op::Hinge, a.value().cwiseMax(0.0), a.id()); }

Var sum(Var a) { return a.tape()->push(Op::Sum, Matrix::Constant(1, 1, a.value().sum()), a.id()); }
Var row_sum(Var a) { return a.tape()->push(Op::RowSum, a.value().rowwise().sum(), a.id()); }
Var col_sum(Var a) { return a.tape()->push(Op::ColSum, a.value().colwise().sum(), a.id()); }

Var gather_rows(Var a, std::vector<std::int32_t> rows) {
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.rows()) throw DataError("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  }
  Tape* t = a.tape();
  const std::int32_t aux = t->store_indices(std::move(rows));
  return t->push(Op::GatherRows, std::move(out), a.id(), -1, 0.0, aux);
}

Var permute_cols(Var a, std::vector<std::int32_t> cols) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] < 0 || cols[c] >= x.cols()) throw DataError("permute_cols index out of range");
    out.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]);
  }
  Tape* t = a.tape();
  const std::int32_t aux = t->store_indices(std::move(cols));
  return t->push(Op::PermuteCols, std::move(out), a.id(), -1, 0.0, aux);
}

Var cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > a.cols()) throw DataError("cols out of range");
  Matrix out = a.value().middleCols(start, count);
  return a.tape()->push(Op::Cols, std::move(out), a.id(), -1, static_cast<double>(start));
}

Var hcat(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows()) throw DataError("shape mismatch in hcat");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return a.tape()->push(Op::HCat, std::move(out), a.id(), b.id());
}

Var minimum(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("shape mismatch in minimum");
  return a.tape()->push(Op::Minimum, a.value().cwiseMin(b.value()), a.id(), b.id());
}

Var maximum(Var a, Var b) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DataError("shape mismatch in maximum");
  return a.tape()->push(Op::Maximum, a.value().cwiseMax(b.value()), a.id(), b.id());
}

Var row_min(Var a) { return a.tape()->push(Op::RowMin, a.value().rowwise().minCoeff(), a.id()); }
Var transpose(Var a) { return a.tape()->push(Op::Transpose, a.value().transpose(), a.id()); }
Var row_norm2(Var a) { return row_sum(square(a)); }

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw DataError("reshape size mismatch");
  Matrix out = a.value().reshaped(rows, cols);
  return a.tape()->push(Op::Reshape, std::move(out), a.id());
}

std::vector<double> gradient(Var output, std::span<const Var> inputs) {
  Tape* t = output.tape();
  if (t == nullptr || !t->contains(output)) throw DataError("detached input");
  for (const Var& in : inputs) {
    if (!t->contains(in)) throw DataError("detached input");
  }
  t->zero_adjoints();
  t->backward(output);
  std::vector<double> g;
  g.reserve(inputs.size());
  for (const Var& in : inputs) g.push_back(t->adjoint(in).sum());
  t->zero_adjoints();
  return g;
}

// ---------------------------------------------------------------------------
// Second-order directional duals.

namespace {

Var zeros_like(Var v) { return v.tape()->zeros(v.rows(), v.cols()); }

bool both_second(const Dual2& a, const Dual2& b) { return a.second && b.second; }

}  // namespace

Dual2 seed(Tape& tape, Var x, bool second) {
  Dual2 d{x, tape.ones(x.rows(), x.cols()), Var(), second};
  if (second) d.d2 = zeros_like(x);
  return d;
}

Dual2 lift(Var c, bool second) {
  Dual2 d{c, zeros_like(c), Var(), second};
  if (second) d.d2 = zeros_like(c);
  return d;
}

Dual2 operator+(const Dual2& a, const Dual2& b) {
  Dual2 r{a.v + b.v, a.d1 + b.d1, Var(), both_second(a, b)};
  if (r.second) r.d2 = a.d2 + b.d2;
  return r;
}

Dual2 operator-(const Dual2& a, const Dual2& b) {
  Dual2 r{a.v - b.v, a.d1 - b.d1, Var(), both_second(a, b)};
  if (r.second) r.d2 = a.d2 - b.d2;
  return r;
}

Dual2 operator*(const Dual2& a, const Dual2& b) {
  Dual2 r{a.v * b.v, a.d1 * b.v + a.v * b.d1, Var(), both_second(a, b)};
  if (r.second) r.d2 = a.d2 * b.v + 2.0 * (a.d1 * b.d1) + a.v * b.d2;
  return r;
}

Dual2 operator/(const Dual2& a, const Dual2& b) {
  Var v = a.v / b.v;
  Var d1 = (a.d1 - v * b.d1) / b.v;
  Dual2 r{v, d1, Var(), both_second(a, b)};
  if (r.second) r.d2 = (a.d2 - 2.0 * (d1 * b.d1) - v * b.d2) / b.v;
  return r;
}

Dual2 operator-(const Dual2& a) {
  Dual2 r{-a.v, -a.d1, Var(), a.second};
  if (a.second) r.d2 = -a.d2;
  return r;
}

Dual2 operator+(const Dual2& a, double c) { return Dual2{a.v + c, a.d1, a.d2, a.second}; }
Dual2 operator+(double c, const Dual2& a) { return a + c; }
Dual2 operator-(const Dual2& a, double c) { return a + (-c); }
Dual2 operator-(double c, const Dual2& a) { return (-a) + c; }

Dual2 operator*(const Dual2& a, double c) {
  Dual2 r{a.v * c, a.d1 * c, Var(), a.second};
  if (a.second) r.d2 = a.d2 * c;
  return r;
}
Dual2 operator*(double c, const Dual2& a) { return a * c; }
Dual2 operator/(const Dual2& a, double c) { return a * (1.0 / c); }

Dual2 operator*(const Dual2& a, Var c) {
  Dual2 r{a.v * c, a.d1 * c, Var(), a.second};
  if (a.second) r.d2 = a.d2 * c;
  return r;
}
Dual2 operator*(Var c, const Dual2& a) { return a * c; }
Dual2 operator+(const Dual2& a, Var c) { return Dual2{a.v + c, a.d1, a.d2, a.second}; }

Dual2 exp(const Dual2& a) {
  Var v = exp(a.v);
  Dual2 r{v, v * a.d1, Var(), a.second};
  if (a.second) r.d2 = v * (a.d2 + square(a.d1));
  return r;
}

Dual2 log(const Dual2& a) {
  Var v = log(a.v);
  Var d1 = a.d1 / a.v;
  Dual2 r{v, d1, Var(), a.second};
  if (a.second) r.d2 = a.d2 / a.v - square(d1);
  return r;
}

Dual2 sqrt(const Dual2& a) {
  Var v = sqrt(a.v);
  Var d1 = a.d1 / (2.0 * v);
  Dual2 r{v, d1, Var(), a.second};
  if (a.second) r.d2 = (a.d2 - 2.0 * square(d1)) / (2.0 * v);
  return r;
}

Dual2 square(const Dual2& a) {
  Dual2 r{square(a.v), 2.0 * (a.v * a.d1), Var(), a.second};
  if (a.second) r.d2 = 2.0 * (square(a.d1) + a.v * a.d2);
  return r;
}

Dual2 sigmoid(const Dual2& a) {
  Var s = sigmoid(a.v);
  Var ds = s * (1.0 - s);
  Dual2 r{s, ds * a.d1, Var(), a.second};
  if (a.second) r.d2 = ds * (1.0 - 2.0 * s) * square(a.d1) + ds * a.d2;
  return r;
}

Dual2 silu(const Dual2& a) {
  Var s1 = silu_d1(a.v);
  Dual2 r{silu(a.v), s1 * a.d1, Var(), a.second};
  if (a.second) r.d2 = silu_d2(a.v) * square(a.d1) + s1 * a.d2;
  return r;
}

Dual2 relu(const Dual2& a) {
  // Step mask is piecewise constant, so it carries no gradient.
  Tape* t = a.v.tape();
  Var mask = t->constant(a.v.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; }));
  Dual2 r{relu(a.v), mask * a.d1, Var(), a.second};
  if (a.second) r.d2 = mask * a.d2;
  return r;
}

Dual2 sum(const Dual2& a) {
  Dual2 r{sum(a.v), sum(a.d1), Var(), a.second};
  if (a.second) r.d2 = sum(a.d2);
  return r;
}

Dual2 row_sum(const Dual2& a) {
  Dual2 r{row_sum(a.v), row_sum(a.d1), Var(), a.second};
  if (a.second) r.d2 = row_sum(a.d2);
  return r;
}

Dual2 matmul(const Dual2& a, Var w) {
  Dual2 r{matmul(a.v, w), matmul(a.d1, w), Var(), a.second};
  if (a.second) r.d2 = matmul(a.d2, w);
  return r;
}

Dual2 add_row(const Dual2& a, Var bias) { return Dual2{add_row(a.v, bias), a.d1, a.d2, a.second}; }

Dual2 sparse_matmul(const SparseMatrix& m, const Dual2& a) {
  Dual2 r{sparse_matmul(m, a.v), sparse_matmul(m, a.d1), Var(), a.second};
  if (a.second) r.d2 = sparse_matmul(m, a.d2);
  return r;
}

Dual2 gather_rows(const Dual2& a, const std::vector<std::int32_t>& rows) {
  Dual2 r{gather_rows(a.v, rows), gather_rows(a.d1, rows), Var(), a.second};
  if (a.second) r.d2 = gather_rows(a.d2, rows);
  return r;
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& f, double x, double h) {
  Tape tape;
  Var in = tape.variable(x);
  Var out = f(tape, in);
  const Var inputs[] = {in};
  const double ad = gradient(out, inputs)[0];

  auto eval = [&](double at) {
    Tape t;
    return f(t, t.constant(at)).scalar();
  };
  const double fd = (eval(x + h) - eval(x - h)) / (2.0 * h);
  const double denom = std::max({std::abs(ad), std::abs(fd), 1.0});
  return std::abs(ad - fd) / denom;
}

}  // namespace gibbsnet::ad
