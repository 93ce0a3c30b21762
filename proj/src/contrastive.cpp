#include "getral/contrastive.hpp"

#include <cmath>

namespace getral {

Var supcon_loss(Var reps, std::span<const int> labels, std::size_t anchor_count, const ContrastiveOptions& options) {
  if (!(options.tau > 0.0)) throw DomainError("supcon_loss: temperature must be positive");
  const std::size_t pool = reps.rows();
  if (labels.size() != pool) {
    throw ShapeError("supcon_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(pool) +
                     " representations");
  }
  if (anchor_count > pool) throw ShapeError("supcon_loss: more anchors than pool members");
  Tape& t = reps.tape();
  if (anchor_count == 0) return t.constant(Matrix(1, 1));

  std::vector<std::size_t> anchor_rows(anchor_count);
  for (std::size_t i = 0; i < anchor_count; ++i) anchor_rows[i] = i;
  Var anchors = anchor_count == pool ? reps : gather_rows(reps, anchor_rows);
  Var sims = scale(cosine_rows(anchors, reps), 1.0 / options.tau);  // anchors x pool

  std::vector<Var> terms;
  for (std::size_t i = 0; i < anchor_count; ++i) {
    std::vector<std::size_t> pos, denom;
    bool has_negative = false;
    for (std::size_t j = 0; j < pool; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        pos.push_back(j);
        if (options.standard_denominator) denom.push_back(j);
      } else {
        has_negative = true;
        denom.push_back(j);
      }
    }
    if (pos.empty() || !has_negative) continue;
    Var column = transpose(gather_rows(sims, {i}));
    Var pos_mean = mean_rows(gather_rows(column, pos));
    Var lse = logsumexp_rows(transpose(gather_rows(column, denom)));
    // -1/|P| sum_p log(exp(c_p) / sum_n exp(c_n)) = lse - mean_p c_p
    terms.push_back(lse - pos_mean);
  }
  if (terms.empty()) return t.constant(Matrix(1, 1));
  Var stacked = terms.size() == 1 ? terms[0] : concat_rows(terms);
  return mean_rows(stacked);
}

Var supcon_loss(Var anchors, Var views, std::span<const int> labels, const ContrastiveOptions& options) {
  if (views.rows() != anchors.rows()) throw ShapeError("supcon_loss: each view must pair with one anchor");
  std::vector<int> all(labels.begin(), labels.end());
  all.insert(all.end(), labels.begin(), labels.end());
  const Var parts[] = {anchors, views};
  return supcon_loss(concat_rows(parts), all, anchors.rows(), options);
}

Var total_loss(Var ce, Var cl, double lambda) {
  if (lambda < 0.0) throw DomainError("total_loss: lambda must be non-negative");
  if (lambda == 0.0) return ce;
  return ce + scale(cl, lambda);
}

AdversarialView adversarial_view(Var evidences, Var claim, Var joint, const AttentionOutput& doc, Var ce,
                                 AttentionParams& doc_params, double epsilon, const Matrix* frozen) {
  if (!(epsilon > 0.0)) throw DomainError("adversarial_view: epsilon must be positive");
  if (evidences.rows() == 0) throw Error("no evidences");
  Tape& t = evidences.tape();
  AdversarialView out;

  const auto& w = doc.weights.at(0);
  for (std::size_t j = 1; j < w.size(); ++j)
    if (w[j] > w[out.evidence]) out.evidence = j;

  if (frozen) {
    if (!frozen->same_shape(evidences.value())) throw ShapeError("adversarial_view: frozen perturbation shape");
    out.perturbation = *frozen;
    out.applied = frobenius_norm(*frozen) > 0.0;
  } else {
    t.zero_grad();
    t.backward(ce);
    const Matrix g = t.grad(evidences);
    t.zero_grad();
    double norm = 0.0;
    for (double v : g.row(out.evidence)) norm += v * v;
    norm = std::sqrt(norm);
    out.perturbation = Matrix(evidences.rows(), evidences.cols());
    if (norm >= 1e-12) {
      out.applied = true;
      for (std::size_t c = 0; c < g.cols(); ++c) out.perturbation(out.evidence, c) = epsilon * g(out.evidence, c) / norm;
    }
  }
  if (!out.applied) {
    out.representation = joint;
    return out;
  }
  Var perturbed = evidences + t.constant(out.perturbation);
  Var h_e = doc_attention(perturbed, claim, doc_params).output;
  const Var parts[] = {claim, h_e};
  out.representation = concat_cols(parts);
  return out;
}

}  // namespace getral
