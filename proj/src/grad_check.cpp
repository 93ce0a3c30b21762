#include "getral/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace getral {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const std::function<Var(Tape&)>& f) {
  Tape tape;
  return f(tape).value().item();
}

}  // namespace

GradCheckReport grad_check_params(const std::function<Var(Tape&)>& f, std::span<Param* const> params,
                                  double step, double tol) {
  if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");

  const double f0 = evaluate(f);
  if (const double f1 = evaluate(f); f0 != f1) {
    throw Error("grad_check: function is not deterministic (" + std::to_string(f0) + " vs " +
                std::to_string(f1) + ")");
  }

  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (Param* p : params) leaves.push_back(tape.param(*p));
    Var out = f(tape);
    tape.backward(out);
    for (const Var& v : leaves) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& x = params[k]->value;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + step;
      const double fp = evaluate(f);
      x[i] = orig - step;
      const double fm = evaluate(f);
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double err = relative_error(analytic[k][i], numeric);
      ++report.coordinates;
      if (report.worst.empty() || err > report.max_rel_err) {
        report.max_rel_err = err;
        std::ostringstream os;
        os << "param " << k << " coord " << i << ": analytic " << analytic[k][i] << " numeric " << numeric;
        report.worst = os.str();
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

GradCheckReport grad_check(const std::function<Var(Tape&, Var)>& f, const Matrix& point, double step,
                           double tol) {
  Param p(point);
  Param* ps[] = {&p};
  return grad_check_params([&](Tape& t) { return f(t, t.param(p)); }, ps, step, tol);
}

}  // namespace getral
