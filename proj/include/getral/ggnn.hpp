#pragma once

#include <string>

#include "getral/autodiff.hpp"
#include "getral/rng.hpp"

namespace getral {

/// Weights of one gated graph layer over d-dimensional node features.
/// Orientation is right-multiplication: a = Ã (H W_a), z = σ(a W_z + H U_z + b_z), ...
struct GgnnParams {
  Param w_a, w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;

  /// Weights uniform in [-1/sqrt(d), 1/sqrt(d)], biases zero.
  static GgnnParams init(std::size_t dim, Rng& rng);
  static GgnnParams zeros(std::size_t dim);

  std::size_t dim() const { return w_a.value.rows(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_a", w_a);
    f(prefix + ".w_z", w_z);
    f(prefix + ".u_z", u_z);
    f(prefix + ".b_z", b_z);
    f(prefix + ".w_r", w_r);
    f(prefix + ".u_r", u_r);
    f(prefix + ".b_r", b_r);
    f(prefix + ".w_h", w_h);
    f(prefix + ".u_h", u_h);
    f(prefix + ".b_h", b_h);
  }
};

struct GgnnTrace {
  Var a;          // aggregated messages
  Var z;          // update gate
  Var r;          // reset gate
  Var candidate;  // H̃
  Var output;     // Ĥ
};

/// One propagation step: Ĥ = H̃ ⊙ z + H ⊙ (1 - z).
GgnnTrace ggnn_step(Var adjacency, Var h, GgnnParams& params);

/// As ggnn_step, but neighbour j's message is scaled by (1 - σ(scores_j)).
/// Gradient reaches `scores` through that factor.
GgnnTrace ggnn_scaled_step(Var adjacency, Var h, Var scores, GgnnParams& params);

}  // namespace getral
