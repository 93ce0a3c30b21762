#pragma once

#include <functional>
#include <span>
#include <string>

#include "getral/autodiff.hpp"

namespace getral {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t coordinates = 0;
  /// Description of the worst coordinate, for diagnostics.
  std::string worst;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares the tape gradient of a scalar function of one input against
/// central differences (f(x+he) - f(x-he)) / 2h at every coordinate.
/// Throws Error when two evaluations at the same point disagree.
GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& point, double step,
                           double tol);

/// Same check with respect to every entry of the given parameters; the
/// function binds them itself through Tape::param.
GradCheckReport grad_check_params(const std::function<Var(Tape&)>& f, std::span<Param* const> params,
                                  double step, double tol);

}  // namespace getral
