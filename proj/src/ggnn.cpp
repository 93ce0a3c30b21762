#include "getral/ggnn.hpp"

#include <cmath>

namespace getral {

GgnnParams GgnnParams::init(std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto w = [&] { return Param(rng.uniform_matrix(dim, dim, -bound, bound)); };
  auto b = [&] { return Param(Matrix(1, dim)); };
  GgnnParams p;
  p.w_a = w();
  p.w_z = w();
  p.u_z = w();
  p.b_z = b();
  p.w_r = w();
  p.u_r = w();
  p.b_r = b();
  p.w_h = w();
  p.u_h = w();
  p.b_h = b();
  return p;
}

GgnnParams GgnnParams::zeros(std::size_t dim) {
  auto w = [&] { return Param(Matrix(dim, dim)); };
  auto b = [&] { return Param(Matrix(1, dim)); };
  return GgnnParams{w(), w(), w(), b(), w(), w(), b(), w(), w(), b()};
}

namespace {

void check_shapes(const Var& adjacency, const Var& h, const GgnnParams& p) {
  const std::size_t n = h.rows();
  if (adjacency.rows() != n || adjacency.cols() != n) {
    throw ShapeError("ggnn: adjacency " + adjacency.value().shape_str() + " does not match features " +
                     h.value().shape_str());
  }
  if (h.cols() != p.dim()) {
    throw ShapeError("ggnn: features " + h.value().shape_str() + " do not match parameter dim " +
                     std::to_string(p.dim()));
  }
}

GgnnTrace gate(Var h, Var a, GgnnParams& p) {
  Tape& t = h.tape();
  GgnnTrace tr;
  tr.a = a;
  tr.z = sigmoid(add_row(matmul(a, t.param(p.w_z)) + matmul(h, t.param(p.u_z)), t.param(p.b_z)));
  tr.r = sigmoid(add_row(matmul(a, t.param(p.w_r)) + matmul(h, t.param(p.u_r)), t.param(p.b_r)));
  tr.candidate = tanh(add_row(matmul(a, t.param(p.w_h)) + matmul(tr.r * h, t.param(p.u_h)), t.param(p.b_h)));
  // Ĥ = H̃ ⊙ z + H ⊙ (1 - z)
  tr.output = tr.candidate * tr.z + h * add_scalar(scale(tr.z, -1.0), 1.0);
  return tr;
}

}  // namespace

GgnnTrace ggnn_step(Var adjacency, Var h, GgnnParams& params) {
  check_shapes(adjacency, h, params);
  Var a = matmul(adjacency, matmul(h, h.tape().param(params.w_a)));
  return gate(h, a, params);
}

GgnnTrace ggnn_scaled_step(Var adjacency, Var h, Var scores, GgnnParams& params) {
  check_shapes(adjacency, h, params);
  if (scores.rows() != h.rows() || scores.cols() != 1) {
    throw ShapeError("ggnn_scaled_step: scores " + scores.value().shape_str() + " for " +
                     std::to_string(h.rows()) + " nodes");
  }
  Var keep = add_scalar(scale(sigmoid(scores), -1.0), 1.0);
  Var messages = mul_col(matmul(h, h.tape().param(params.w_a)), keep);
  return gate(h, matmul(adjacency, messages), params);
}

}  // namespace getral
