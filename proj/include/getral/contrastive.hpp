#pragma once

#include <span>
#include <vector>

#include "getral/autodiff.hpp"
#include "getral/readout.hpp"

namespace getral {

struct ContrastiveOptions {
  double tau = 0.1;
  /// Denominator over every non-anchor member instead of negatives only.
  bool standard_denominator = false;
};

/// Supervised contrastive loss. Rows of `reps` are pool members with the
/// given labels; the first `anchor_count` rows are anchors. For each anchor,
/// positives are the other same-label members and the denominator sums
/// exp(cos/tau) over different-label members. Anchors lacking positives or
/// negatives are skipped; the result is the mean over the remaining anchors
/// (0 when none remain).
Var supcon_loss(Var reps, std::span<const int> labels, std::size_t anchor_count, const ContrastiveOptions& options);

/// Anchors are the original representations; views join the pool with their anchor's label.
Var supcon_loss(Var anchors, Var views, std::span<const int> labels, const ContrastiveOptions& options);

/// L = L_ce + lambda * L_cl. With lambda == 0 the contrastive term is not recorded at all.
Var total_loss(Var ce, Var cl, double lambda);

struct AdversarialView {
  Var representation;      // h'
  std::size_t evidence = 0;  // k, the most attended evidence
  bool applied = false;    // false when the gradient vanished and h' = h
  Matrix perturbation;     // evidences-shaped, nonzero only in row k
};

/// Builds h' = [h_c; ATTN(H_e^g + delta, h_c)] where delta perturbs the most
/// attended evidence row (head 0 weights, ties to the lower index) by
/// epsilon * g / ||g||, g being the gradient of `ce` at that row. The
/// perturbation is a constant on the tape. Runs a backward pass for `ce` and
/// clears all tape gradients afterwards. A `frozen` perturbation, when given,
/// is used as delta directly.
AdversarialView adversarial_view(Var evidences, Var claim, Var joint, const AttentionOutput& doc, Var ce,
                                 AttentionParams& doc_params, double epsilon, const Matrix* frozen = nullptr);

}  // namespace getral
