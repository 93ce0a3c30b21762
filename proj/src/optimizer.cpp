#include "getral/optimizer.hpp"

#include <cmath>

namespace getral {

Adam::Adam(AdamOptions options, std::vector<Param*> params) : opt_(options), params_(std::move(params)) {
  for (Param* p : params_) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const double shrink = 1.0 - opt_.lr * opt_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    if (!p.grad.same_shape(p.value)) p.zero_grad();
    Matrix& m = m_[k];
    Matrix& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
      v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.value[i] = p.value[i] * shrink - opt_.lr * m_hat / (std::sqrt(v_hat) + opt_.eps);
    }
  }
}

}  // namespace getral
