#pragma once

// Minimal tape-based reverse-mode differentiation over dense matrices.
//
// A Tape records every primitive applied to tracked values in program order.
// Backward walks the tape in exact reverse order and keeps the gradient of
// every node, so gradients at intermediate values stay retrievable after the
// pass (the adversarial augmentation step needs this).

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "getral/matrix.hpp"

namespace getral {

/// A learnable tensor that outlives individual tapes.
struct Param {
  Matrix value;
  Matrix grad;

  Param() = default;
  explicit Param(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

enum class OpKind {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  AddRow,
  MulCol,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  Softmax,
  LogSumExp,
  MeanRows,
  Sum,
  ConcatCols,
  ConcatRows,
  GatherRows,
  MaskedFill,
  CosineRows,
  L2NormRows,
  Clamp,
  Transpose,
};

std::string_view op_name(OpKind kind);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool tracked() const;
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked value; receives no gradient.
  Var constant(Matrix value);
  /// Tracked leaf not tied to a Param.
  Var variable(Matrix value);
  /// Tracked leaf bound to a Param. Binding the same Param twice returns the same node.
  Var param(Param& p);

  /// Reverse pass from a scalar loss. Gradients from earlier passes are kept
  /// and accumulated into; call zero_grad() between independent passes.
  void backward(Var loss);
  void zero_grad();

  /// Gradient of the last backward pass(es) at any tracked node (zeros if untouched).
  Matrix grad(Var v) const;
  bool has_grad(Var v) const;

  /// Adds each bound Param's leaf gradient into Param::grad.
  void accumulate_param_grads();

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_[id].kind; }
  std::span<const std::size_t> inputs(std::size_t id) const { return nodes_[id].inputs; }

  // Used by primitive implementations.
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& out_grad(std::size_t id) const { return nodes_[id].grad; }
  bool tracked(std::size_t id) const { return nodes_[id].tracked; }
  void accumulate(std::size_t id, const Matrix& g);
  Var record(OpKind kind, std::vector<Var> inputs, Matrix value, BackwardFn backward);

 private:
  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool tracked = false;
    BackwardFn backward;
    Param* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, std::size_t> param_nodes_;
};

// Dense helpers without a tape.
namespace dense {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double sigmoid(double x);
}  // namespace dense

// Primitives. Each checks shapes and throws ShapeError naming the kind and shapes.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(Var a, Var row);
/// a (n x m) times col (n x 1) broadcast over columns.
Var mul_col(Var a, Var col);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
/// Throws DomainError on non-positive input.
Var log(Var a);
Var softmax_rows(Var a);
/// Numerically stable log(sum(exp(.))) of each row -> n x 1.
Var logsumexp_rows(Var a);
/// Mean of the rows -> 1 x m.
Var mean_rows(Var a);
/// Sum of all entries -> 1 x 1.
Var sum(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var a, std::vector<std::size_t> rows);
/// Entries where mask is true are replaced by fill and receive no gradient.
Var masked_fill(Var a, const std::vector<bool>& mask, double fill);
/// out(i, j) = cos(a_i, b_j); 0 when either row has norm < 1e-12.
Var cosine_rows(Var a, Var b);
/// Euclidean norm of each row -> n x 1.
Var l2_norm_rows(Var a);
Var clamp(Var a, double lo, double hi);
Var transpose(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

inline constexpr double kCosineEps = 1e-12;
inline constexpr double kLogFloor = 1e-12;

}  // namespace getral
