#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "getral/grad_check.hpp"

namespace getral {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

/// Finite-difference checks over every tape primitive, both GGNN steps, the
/// SRM layer with its discard set frozen, attention readout, classifier with
/// cross-entropy, the contrastive loss and the end-to-end joint loss on a
/// two-instance toy batch.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 2024, double step = 1e-5, double tol = 1e-4);

}  // namespace getral
