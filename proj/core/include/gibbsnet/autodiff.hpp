// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape with matrix-valued nodes plus second-order directional
// duals whose components live on the same tape (forward-over-reverse).
//
// A scalar is a 1x1 node. Batched model evaluations keep one evaluation per
// row, so a whole batch of layer applications is one matrix product.
#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "gibbsnet/error.hpp"

namespace gibbsnet::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class Tape;

/// Handle to a node on a tape. Cheap to copy; invalid when default-constructed.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  Tape* tape() const { return tape_; }
  std::int32_t id() const { return id_; }

  const Matrix& value() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Const,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  MatMul,
  SparseMatMul,
  AddRowBroadcast,
  MulColBroadcast,
  Exp,
  Log,
  Sqrt,
  Square,
  Abs,
  Sigmoid,
  Silu,
  SiluD1,
  SiluD2,
  Relu,
  Softplus,
  Hinge,
  Sum,
  RowSum,
  ColSum,
  GatherRows,
  PermuteCols,
  Cols,
  HCat,
  Minimum,
  Maximum,
  RowMin,
  Transpose,
  Reshape,
};

/// Arena of nodes owned by one evaluation context. Not thread-safe; use one
/// tape per worker.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Matrix value);
  Var variable(double value);
  Var constant(Matrix value);
  Var constant(double value);
  Var zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Zero(rows, cols)); }
  Var ones(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Ones(rows, cols)); }

  const Matrix& value(Var v) const;
  bool needs_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool contains(Var v) const { return v.tape() == this && v.id() >= 0 && static_cast<std::size_t>(v.id()) < nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 (or `seed` for non-scalar outputs) and sweeps
  /// adjoints back to the leaves. A second sweep without zero_adjoints()
  /// throws.
  void backward(Var out);
  void backward(Var out, const Matrix& seed);

  /// Adjoint of `v` after backward(); zero matrix when nothing reached it.
  Matrix adjoint(Var v) const;
  void zero_adjoints();
  /// Drops every node; outstanding Vars become dangling.
  void reset();

  // Node construction; prefer the free functions below.
  Var push(Op op, Matrix value, std::int32_t a = -1, std::int32_t b = -1, double c = 0.0, std::int32_t aux = -1);
  std::int32_t store_indices(std::vector<std::int32_t> idx);
  std::int32_t store_sparse(SparseMatrix m);
  const std::vector<std::int32_t>& indices(std::int32_t aux) const { return index_store_[aux]; }
  const SparseMatrix& sparse(std::int32_t aux) const { return sparse_store_[aux]; }

 private:
  struct Node {
    Op op = Op::Const;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::int32_t aux = -1;
    double c = 0.0;
    bool grad = false;
    Matrix value;
    Matrix adj;
  };

  Matrix& adj_ref(std::int32_t id);
  void accumulate(std::int32_t id, Matrix g);
  void propagate(std::int32_t id);

  std::vector<Node> nodes_;
  std::vector<std::vector<std::int32_t>> index_store_;
  std::vector<SparseMatrix> sparse_store_;
  bool swept_ = false;
};

// Elementwise arithmetic. A 1x1 operand broadcasts against any shape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);

Var matmul(Var a, Var b);
/// Constant sparse matrix times a node.
Var sparse_matmul(const SparseMatrix& m, Var a);
/// a (r x n) plus row vector b (1 x n) added to every row.
Var add_row(Var a, Var b);
/// a (r x n) with row k scaled by c(k) (c is r x 1).
Var mul_col(Var a, Var c);

Var exp(Var a);
/// Throws NumericalError("domain") on a non-positive argument.
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
/// Derivative at 0 taken as +1.
Var abs(Var a);
Var sigmoid(Var a);
Var silu(Var a);
Var silu_d1(Var a);
Var silu_d2(Var a);
Var relu(Var a);
/// ln(1 + e^a), linear branch above 30.
Var softplus(Var a);
/// max(0, a); derivative at 0 is 0.
Var hinge(Var a);

Var sum(Var a);
Var row_sum(Var a);
Var col_sum(Var a);
Var gather_rows(Var a, std::vector<std::int32_t> rows);
Var permute_cols(Var a, std::vector<std::int32_t> cols);
Var cols(Var a, Eigen::Index start, Eigen::Index count);
Var hcat(Var a, Var b);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var row_min(Var a);
Var transpose(Var a);
/// Squared Euclidean norm of each row, r x 1.
Var row_norm2(Var a);
/// Column-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

/// d(out)/d(input) for scalar inputs; adjoints are cleared afterwards.
/// Throws DataError("detached input") for a Var that does not belong to the
/// output's tape.
std::vector<double> gradient(Var output, std::span<const Var> inputs);

// Pure-value helpers shared with the tape primitives.
double sigmoid_value(double x);
double silu_value(double x);
double silu_d1_value(double x);
double silu_d2_value(double x);
double silu_d3_value(double x);
double softplus_value(double x);

/// Value plus first and second derivative along one scalar direction, each a
/// tape node so that the derivatives remain differentiable with respect to
/// anything upstream (model parameters).
///
/// When `second` is false only the first-order part is tracked and d2 is
/// invalid.
struct Dual2 {
  Var v;
  Var d1;
  Var d2;
  bool second = true;

  Eigen::Index rows() const { return v.rows(); }
  Eigen::Index cols() const { return v.cols(); }
};

/// Independent variable along the direction: (x, 1, 0).
Dual2 seed(Tape& tape, Var x, bool second = true);
/// Direction-independent quantity: (c, 0, 0).
Dual2 lift(Var c, bool second = true);

Dual2 operator+(const Dual2& a, const Dual2& b);
Dual2 operator-(const Dual2& a, const Dual2& b);
Dual2 operator*(const Dual2& a, const Dual2& b);
Dual2 operator/(const Dual2& a, const Dual2& b);
Dual2 operator-(const Dual2& a);
Dual2 operator+(const Dual2& a, double c);
Dual2 operator+(double c, const Dual2& a);
Dual2 operator-(const Dual2& a, double c);
Dual2 operator-(double c, const Dual2& a);
Dual2 operator*(const Dual2& a, double c);
Dual2 operator*(double c, const Dual2& a);
Dual2 operator/(const Dual2& a, double c);
/// Product with a direction-independent node.
Dual2 operator*(const Dual2& a, Var c);
Dual2 operator*(Var c, const Dual2& a);
Dual2 operator+(const Dual2& a, Var c);

Dual2 exp(const Dual2& a);
Dual2 log(const Dual2& a);
Dual2 sqrt(const Dual2& a);
Dual2 square(const Dual2& a);
Dual2 sigmoid(const Dual2& a);
Dual2 silu(const Dual2& a);
Dual2 relu(const Dual2& a);
Dual2 sum(const Dual2& a);
Dual2 row_sum(const Dual2& a);
/// Right-multiplication by a direction-independent matrix.
Dual2 matmul(const Dual2& a, Var w);
Dual2 add_row(const Dual2& a, Var bias);
Dual2 sparse_matmul(const SparseMatrix& m, const Dual2& a);
Dual2 gather_rows(const Dual2& a, const std::vector<std::int32_t>& rows);

/// Evaluates f at x0 with a unit seed; the returned components stay on `tape`.
template <class F>
Dual2 second_directional(Tape& tape, F&& f, double x0) {
  Var x = tape.variable(x0);
  return f(seed(tape, x));
}

/// Largest relative error (unit floor on the denominator) between the
/// reverse-mode derivative of f at x and a central difference with step h.
/// f maps (tape, scalar input node) to a scalar output node.
double finite_difference_check(const std::function<Var(Tape&, Var)>& f, double x, double h);

}  // namespace gibbsnet::ad
