#pragma once

#include <vector>

#include "getral/autodiff.hpp"

namespace getral {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled: each step scales weights by (1 - lr * weight_decay) before the Adam update.
  double weight_decay = 1e-3;
};

class Adam {
 public:
  Adam(AdamOptions options, std::vector<Param*> params);

  /// Applies one update from each Param::grad.
  void step();
  std::size_t steps() const { return t_; }

 private:
  AdamOptions opt_;
  std::vector<Param*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

}  // namespace getral
