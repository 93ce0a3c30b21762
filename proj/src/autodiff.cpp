#include "getral/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace getral {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "elementwise-mul";
    case OpKind::Scale: return "scalar-mul";
    case OpKind::AddScalar: return "add-scalar";
    case OpKind::AddRow: return "add-row";
    case OpKind::MulCol: return "mul-col";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSumExp: return "logsumexp";
    case OpKind::MeanRows: return "row-mean";
    case OpKind::Sum: return "sum";
    case OpKind::ConcatCols: return "concat-cols";
    case OpKind::ConcatRows: return "concat-rows";
    case OpKind::GatherRows: return "gather-rows";
    case OpKind::MaskedFill: return "masked-fill";
    case OpKind::CosineRows: return "cosine-rows";
    case OpKind::L2NormRows: return "l2-norm";
    case OpKind::Clamp: return "clamp";
    case OpKind::Transpose: return "transpose";
  }
  return "unknown";
}

const Matrix& Var::value() const { return tape_->value(id_); }
bool Var::tracked() const { return tape_->tracked(id_); }

namespace {

[[noreturn]] void shape_fail(OpKind kind, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

[[noreturn]] void shape_fail(OpKind kind, const Matrix& a, const std::string& why) {
  throw ShapeError(std::string(op_name(kind)) + ": shape " + a.shape_str() + " " + why);
}

template <typename F>
Matrix map(const Matrix& a, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// g * y * (1 - y) style elementwise combination of two same-shape matrices.
template <typename F>
Matrix zip(const Matrix& a, const Matrix& b, F f) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::move(value);
  n.tracked = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Var v = variable(p.value);
  nodes_[v.id()].param = &p;
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(OpKind kind, std::vector<Var> inputs, Matrix value, BackwardFn backward) {
  Node n;
  n.kind = kind;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.tape() != this) {
      throw Error(std::string(op_name(kind)) + ": operands recorded on different tapes");
    }
    n.inputs.push_back(v.id());
    n.tracked = n.tracked || nodes_[v.id()].tracked;
  }
  if (n.tracked) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.tracked) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (!loss.valid() || &loss.tape() != this) throw Error("backward: loss is not recorded on this tape");
  const Node& root = nodes_[loss.id()];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + root.value.shape_str());
  }
  if (!root.tracked) throw Error("backward: loss does not depend on any tracked value");
  accumulate(loss.id(), Matrix(1, 1, 1.0));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) {
    n.grad = Matrix();
    n.has_grad = false;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Matrix(n.value.rows(), n.value.cols());
}

bool Tape::has_grad(Var v) const { return nodes_[v.id()].has_grad; }

void Tape::accumulate_param_grads() {
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (!n.has_grad) continue;
    Param* p = const_cast<Param*>(param);
    if (!p->grad.same_shape(p->value)) p->zero_grad();
    p->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// Dense helpers

namespace dense {

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_fail(OpKind::MatMul, a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = out.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace dense

namespace {

// a^T * g without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& g) {
  Matrix out(a.cols(), g.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* grow = g.row(p).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      double* orow = out.row(i).data();
      for (std::size_t j = 0; j < g.cols(); ++j) orow[j] += av * grow[j];
    }
  }
  return out;
}

// g * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& g, const Matrix& b) {
  Matrix out(g.rows(), b.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double* grow = g.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < g.cols(); ++p) s += grow[p] * brow[p];
      out(i, j) = s;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail(OpKind::MatMul, av, bv);
  return a.tape().record(OpKind::MatMul, {a, b}, dense::matmul(av, bv), [](Tape& t, std::size_t self) {
    const auto in = t.inputs(self);
    const Matrix& g = t.out_grad(self);
    if (t.tracked(in[0])) t.accumulate(in[0], matmul_nt(g, t.value(in[1])));
    if (t.tracked(in[1])) t.accumulate(in[1], matmul_tn(t.value(in[0]), g));
  });
}

Var add(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_fail(OpKind::Add, a.value(), b.value());
  return a.tape().record(OpKind::Add, {a, b}, zip(a.value(), b.value(), std::plus<>()),
                         [](Tape& t, std::size_t self) {
                           const auto in = t.inputs(self);
                           t.accumulate(in[0], t.out_grad(self));
                           t.accumulate(in[1], t.out_grad(self));
                         });
}

Var sub(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_fail(OpKind::Sub, a.value(), b.value());
  return a.tape().record(OpKind::Sub, {a, b}, zip(a.value(), b.value(), std::minus<>()),
                         [](Tape& t, std::size_t self) {
                           const auto in = t.inputs(self);
                           const Matrix& g = t.out_grad(self);
                           t.accumulate(in[0], g);
                           if (t.tracked(in[1])) t.accumulate(in[1], map(g, [](double x) { return -x; }));
                         });
}

Var mul(Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_fail(OpKind::Mul, a.value(), b.value());
  return a.tape().record(OpKind::Mul, {a, b}, zip(a.value(), b.value(), std::multiplies<>()),
                         [](Tape& t, std::size_t self) {
                           const auto in = t.inputs(self);
                           const Matrix& g = t.out_grad(self);
                           if (t.tracked(in[0])) t.accumulate(in[0], zip(g, t.value(in[1]), std::multiplies<>()));
                           if (t.tracked(in[1])) t.accumulate(in[1], zip(g, t.value(in[0]), std::multiplies<>()));
                         });
}

Var scale(Var a, double s) {
  return a.tape().record(OpKind::Scale, {a}, map(a.value(), [s](double x) { return s * x; }),
                         [s](Tape& t, std::size_t self) {
                           t.accumulate(t.inputs(self)[0], map(t.out_grad(self), [s](double g) { return s * g; }));
                         });
}

Var add_scalar(Var a, double s) {
  return a.tape().record(OpKind::AddScalar, {a}, map(a.value(), [s](double x) { return x + s; }),
                         [](Tape& t, std::size_t self) { t.accumulate(t.inputs(self)[0], t.out_grad(self)); });
}

Var add_row(Var a, Var row) {
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_fail(OpKind::AddRow, av, rv);
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
  return a.tape().record(OpKind::AddRow, {a, row}, std::move(out), [](Tape& t, std::size_t self) {
    const auto in = t.inputs(self);
    const Matrix& g = t.out_grad(self);
    t.accumulate(in[0], g);
    if (t.tracked(in[1])) {
      Matrix gr(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
      t.accumulate(in[1], gr);
    }
  });
}

Var mul_col(Var a, Var col) {
  const Matrix& av = a.value();
  const Matrix& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) shape_fail(OpKind::MulCol, av, cv);
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= cv(i, 0);
  return a.tape().record(OpKind::MulCol, {a, col}, std::move(out), [](Tape& t, std::size_t self) {
    const auto in = t.inputs(self);
    const Matrix& g = t.out_grad(self);
    const Matrix& av = t.value(in[0]);
    const Matrix& cv = t.value(in[1]);
    if (t.tracked(in[0])) {
      Matrix ga = g;
      for (std::size_t i = 0; i < ga.rows(); ++i)
        for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) *= cv(i, 0);
      t.accumulate(in[0], ga);
    }
    if (t.tracked(in[1])) {
      Matrix gc(cv.rows(), 1);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gc(i, 0) += g(i, j) * av(i, j);
      t.accumulate(in[1], gc);
    }
  });
}

Var sigmoid(Var a) {
  return a.tape().record(OpKind::Sigmoid, {a}, map(a.value(), dense::sigmoid), [](Tape& t, std::size_t self) {
    t.accumulate(t.inputs(self)[0],
                 zip(t.out_grad(self), t.value(self), [](double g, double y) { return g * y * (1.0 - y); }));
  });
}

Var tanh(Var a) {
  return a.tape().record(OpKind::Tanh, {a}, map(a.value(), [](double x) { return std::tanh(x); }),
                         [](Tape& t, std::size_t self) {
                           t.accumulate(t.inputs(self)[0], zip(t.out_grad(self), t.value(self),
                                                               [](double g, double y) { return g * (1.0 - y * y); }));
                         });
}

Var exp(Var a) {
  return a.tape().record(OpKind::Exp, {a}, map(a.value(), [](double x) { return std::exp(x); }),
                         [](Tape& t, std::size_t self) {
                           t.accumulate(t.inputs(self)[0], zip(t.out_grad(self), t.value(self), std::multiplies<>()));
                         });
}

Var log(Var a) {
  for (double x : a.value().data()) {
    if (!(x > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x) + " (clamp to >= 1e-12 first)");
    }
  }
  return a.tape().record(OpKind::Log, {a}, map(a.value(), [](double x) { return std::log(x); }),
                         [](Tape& t, std::size_t self) {
                           const std::size_t in = t.inputs(self)[0];
                           t.accumulate(in, zip(t.out_grad(self), t.value(in), std::divides<>()));
                         });
}

Var softmax_rows(Var a) {
  const Matrix& av = a.value();
  if (av.cols() == 0) shape_fail(OpKind::Softmax, av, "has no columns");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const auto r = av.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) z += (out(i, j) = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < r.size(); ++j) out(i, j) /= z;
  }
  return a.tape().record(OpKind::Softmax, {a}, std::move(out), [](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.out_grad(self);
    Matrix ga(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
    }
    t.accumulate(t.inputs(self)[0], ga);
  });
}

Var logsumexp_rows(Var a) {
  const Matrix& av = a.value();
  if (av.cols() == 0) shape_fail(OpKind::LogSumExp, av, "has no columns");
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const auto r = av.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double x : r) z += std::exp(x - mx);
    out(i, 0) = mx + std::log(z);
  }
  return a.tape().record(OpKind::LogSumExp, {a}, std::move(out), [](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    const Matrix& x = t.value(in);
    const Matrix& y = t.value(self);
    const Matrix& g = t.out_grad(self);
    Matrix ga(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) = g(i, 0) * std::exp(x(i, j) - y(i, 0));
    t.accumulate(in, ga);
  });
}

Var mean_rows(Var a) {
  const Matrix& av = a.value();
  if (av.rows() == 0) shape_fail(OpKind::MeanRows, av, "has no rows");
  Matrix out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  const double inv = 1.0 / static_cast<double>(av.rows());
  for (double& v : out.data()) v *= inv;
  return a.tape().record(OpKind::MeanRows, {a}, std::move(out), [inv](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    const Matrix& g = t.out_grad(self);
    Matrix ga(t.value(in).rows(), g.cols());
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g(0, j) * inv;
    t.accumulate(in, ga);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record(OpKind::Sum, {a}, Matrix(1, 1, s), [](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    const Matrix& x = t.value(in);
    t.accumulate(in, Matrix(x.rows(), x.cols(), t.out_grad(self)(0, 0)));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat-cols: no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_fail(OpKind::ConcatCols, parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    off += pv.cols();
  }
  return parts[0].tape().record(
      OpKind::ConcatCols, std::vector<Var>(parts.begin(), parts.end()), std::move(out),
      [](Tape& t, std::size_t self) {
        const Matrix& g = t.out_grad(self);
        std::size_t off = 0;
        for (std::size_t in : t.inputs(self)) {
          const std::size_t c = t.value(in).cols();
          if (t.tracked(in)) {
            Matrix gp(g.rows(), c);
            for (std::size_t i = 0; i < g.rows(); ++i)
              for (std::size_t j = 0; j < c; ++j) gp(i, j) = g(i, off + j);
            t.accumulate(in, gp);
          }
          off += c;
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat-rows: no operands");
  const std::size_t cols = parts[0].cols();
  std::vector<double> v;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) shape_fail(OpKind::ConcatRows, parts[0].value(), p.value());
    rows += p.rows();
    v.insert(v.end(), p.value().data().begin(), p.value().data().end());
  }
  return parts[0].tape().record(
      OpKind::ConcatRows, std::vector<Var>(parts.begin(), parts.end()), Matrix(rows, cols, std::move(v)),
      [](Tape& t, std::size_t self) {
        const Matrix& g = t.out_grad(self);
        std::size_t off = 0;
        for (std::size_t in : t.inputs(self)) {
          const std::size_t r = t.value(in).rows();
          if (t.tracked(in)) {
            const auto first = g.data().begin() + static_cast<std::ptrdiff_t>(off * g.cols());
            t.accumulate(in, Matrix(r, g.cols(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(r * g.cols()))));
          }
          off += r;
        }
      });
}

Var gather_rows(Var a, std::vector<std::size_t> rows) {
  const Matrix& av = a.value();
  Matrix out(rows.size(), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) {
      shape_fail(OpKind::GatherRows, av, "indexed at row " + std::to_string(rows[i]));
    }
    std::copy(av.row(rows[i]).begin(), av.row(rows[i]).end(), out.row(i).begin());
  }
  return a.tape().record(OpKind::GatherRows, {a}, std::move(out),
                         [rows = std::move(rows)](Tape& t, std::size_t self) {
                           const std::size_t in = t.inputs(self)[0];
                           const Matrix& g = t.out_grad(self);
                           Matrix ga(t.value(in).rows(), g.cols());
                           for (std::size_t i = 0; i < rows.size(); ++i)
                             for (std::size_t j = 0; j < g.cols(); ++j) ga(rows[i], j) += g(i, j);
                           t.accumulate(in, ga);
                         });
}

Var masked_fill(Var a, const std::vector<bool>& mask, double fill) {
  const Matrix& av = a.value();
  if (mask.size() != av.size()) {
    shape_fail(OpKind::MaskedFill, av, "with mask of " + std::to_string(mask.size()) + " entries");
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = fill;
  return a.tape().record(OpKind::MaskedFill, {a}, std::move(out), [mask](Tape& t, std::size_t self) {
    Matrix g = t.out_grad(self);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (mask[i]) g[i] = 0.0;
    t.accumulate(t.inputs(self)[0], g);
  });
}

namespace {

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> n(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += v * v;
    n[i] = std::sqrt(s);
  }
  return n;
}

}  // namespace

Var cosine_rows(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail(OpKind::CosineRows, av, bv);
  const auto na = row_norms(av);
  const auto nb = row_norms(bv);
  Matrix out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    if (na[i] < kCosineEps) continue;
    for (std::size_t j = 0; j < bv.rows(); ++j) {
      if (nb[j] < kCosineEps) continue;
      double dot = 0.0;
      for (std::size_t p = 0; p < av.cols(); ++p) dot += av(i, p) * bv(j, p);
      out(i, j) = dot / (na[i] * nb[j]);
    }
  }
  return a.tape().record(OpKind::CosineRows, {a, b}, std::move(out), [na, nb](Tape& t, std::size_t self) {
    const auto in = t.inputs(self);
    const Matrix& av = t.value(in[0]);
    const Matrix& bv = t.value(in[1]);
    const Matrix& c = t.value(self);
    const Matrix& g = t.out_grad(self);
    Matrix ga(av.rows(), av.cols());
    Matrix gb(bv.rows(), bv.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
      if (na[i] < kCosineEps) continue;
      for (std::size_t j = 0; j < bv.rows(); ++j) {
        if (nb[j] < kCosineEps || g(i, j) == 0.0) continue;
        const double inv = 1.0 / (na[i] * nb[j]);
        const double ca = c(i, j) / (na[i] * na[i]);
        const double cb = c(i, j) / (nb[j] * nb[j]);
        for (std::size_t p = 0; p < av.cols(); ++p) {
          ga(i, p) += g(i, j) * (bv(j, p) * inv - ca * av(i, p));
          gb(j, p) += g(i, j) * (av(i, p) * inv - cb * bv(j, p));
        }
      }
    }
    if (t.tracked(in[0])) t.accumulate(in[0], ga);
    if (t.tracked(in[1])) t.accumulate(in[1], gb);
  });
}

Var l2_norm_rows(Var a) {
  const auto n = row_norms(a.value());
  return a.tape().record(OpKind::L2NormRows, {a}, Matrix::column_vector(n), [](Tape& t, std::size_t self) {
    const std::size_t in = t.inputs(self)[0];
    const Matrix& x = t.value(in);
    const Matrix& n = t.value(self);
    const Matrix& g = t.out_grad(self);
    Matrix ga(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (n(i, 0) < kCosineEps) continue;
      for (std::size_t j = 0; j < x.cols(); ++j) ga(i, j) = g(i, 0) * x(i, j) / n(i, 0);
    }
    t.accumulate(in, ga);
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lo > hi");
  return a.tape().record(OpKind::Clamp, {a}, map(a.value(), [lo, hi](double x) { return std::clamp(x, lo, hi); }),
                         [lo, hi](Tape& t, std::size_t self) {
                           const std::size_t in = t.inputs(self)[0];
                           t.accumulate(in, zip(t.out_grad(self), t.value(in), [lo, hi](double g, double x) {
                                          return (x >= lo && x <= hi) ? g : 0.0;
                                        }));
                         });
}

Var transpose(Var a) {
  return a.tape().record(OpKind::Transpose, {a}, dense::transpose(a.value()), [](Tape& t, std::size_t self) {
    t.accumulate(t.inputs(self)[0], dense::transpose(t.out_grad(self)));
  });
}

}  // namespace getral
