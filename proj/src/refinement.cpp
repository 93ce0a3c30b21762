#include "getral/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace getral {

KernelBank KernelBank::default_bank(std::size_t k) {
  if (k < 2) throw Error("kernel bank needs at least 2 kernels, got " + std::to_string(k));
  KernelBank bank;
  bank.mu.push_back(1.0);
  bank.sigma.push_back(1e-3);
  const double bins = static_cast<double>(k - 1);
  for (std::size_t t = 1; t < k; ++t) {
    bank.mu.push_back(-1.0 + (2.0 * static_cast<double>(t) - 1.0) / bins);
    bank.sigma.push_back(0.1);
  }
  return bank;
}

RefinementParams RefinementParams::init(std::size_t dim, std::size_t kernels, Rng& rng) {
  RefinementParams p;
  const double bd = 1.0 / std::sqrt(static_cast<double>(dim));
  const double bk = 1.0 / std::sqrt(static_cast<double>(kernels));
  p.w_se = Param(rng.uniform_matrix(dim, 1, -bd, bd));
  p.w_sc = Param(rng.uniform_matrix(kernels, 1, -bk, bk));
  p.scorer_se = GgnnParams::init(1, rng);
  p.scorer_sc = GgnnParams::init(1, rng);
  return p;
}

Var self_score(Var h_e, Var w_se) {
  if (w_se.cols() != 1) throw ShapeError("self_score: projection must be d x 1, got " + w_se.value().shape_str());
  return matmul(h_e, w_se);
}

Var translation_matrix(Var h_e, Var h_c) { return cosine_rows(h_e, h_c); }

Var kernel_features(Var m, const KernelBank& bank) {
  if (m.cols() == 0) throw Error("empty claim");
  if (bank.size() == 0) throw Error("kernel_features: empty kernel bank");
  std::vector<Var> cols;
  cols.reserve(bank.size());
  for (std::size_t t = 0; t < bank.size(); ++t) {
    if (!(bank.sigma[t] > 0.0)) throw DomainError("kernel_features: kernel width must be positive");
    Var centred = add_scalar(m, -bank.mu[t]);
    Var z = scale(centred * centred, -1.0 / (2.0 * bank.sigma[t] * bank.sigma[t]));
    cols.push_back(logsumexp_rows(z));
  }
  return concat_cols(cols);
}

Var claim_score(Var k, Var w_sc) {
  if (w_sc.cols() != 1) throw ShapeError("claim_score: projection must be k x 1, got " + w_sc.value().shape_str());
  return matmul(k, w_sc);
}

FusedScores fuse_scores(Var adjacency, Var raw_se, Var raw_sc, GgnnParams& scorer_se, GgnnParams& scorer_sc,
                        double beta, bool crossed) {
  if (beta < 0.0 || beta > 1.0) throw DomainError("fuse_scores: beta must lie in [0, 1]");
  if (raw_se.cols() != 1 || raw_sc.cols() != 1 || raw_se.rows() != raw_sc.rows()) {
    throw ShapeError("fuse_scores: score shapes " + raw_se.value().shape_str() + " and " +
                     raw_sc.value().shape_str());
  }
  FusedScores out;
  out.s_se = ggnn_step(adjacency, crossed ? raw_sc : raw_se, scorer_se).output;
  out.s_sc = ggnn_step(adjacency, crossed ? raw_se : raw_sc, scorer_sc).output;
  if (beta == 0.0) {
    out.s_r = out.s_se;
  } else if (beta == 1.0) {
    out.s_r = out.s_sc;
  } else {
    out.s_r = scale(out.s_se, 1.0 - beta) + scale(out.s_sc, beta);
  }
  return out;
}

std::size_t discard_count(double rate, std::size_t active) {
  if (active == 0) return 0;
  // The small offset keeps products such as 0.29 * 100 from flooring to 28.
  auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(active) + 1e-9));
  return std::min(k, active - 1);
}

DiscardResult apply_discard(const Matrix& adjacency, const std::vector<bool>& active,
                            const std::vector<std::size_t>& discarded) {
  DiscardResult out{adjacency, active, discarded};
  const std::size_t n = adjacency.rows();
  for (std::size_t i : discarded) {
    if (i >= n) throw Error("discard index " + std::to_string(i) + " out of range");
    out.active[i] = false;
    for (std::size_t j = 0; j < n; ++j) out.adjacency(i, j) = out.adjacency(j, i) = 0.0;
  }
  return out;
}

DiscardResult discard_topk(const Matrix& adjacency, std::span<const double> scores, const std::vector<bool>& active,
                           double rate) {
  if (rate < 0.0 || rate >= 1.0) throw DomainError("discard rate must lie in [0, 1)");
  if (scores.size() != active.size() || adjacency.rows() != active.size()) {
    throw ShapeError("discard_topk: " + std::to_string(scores.size()) + " scores, " +
                     std::to_string(active.size()) + " mask entries, adjacency " + adjacency.shape_str());
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) candidates.push_back(i);
  if (candidates.empty()) throw Error("discard_topk: all nodes are already inactive");

  const std::size_t k = discard_count(rate, candidates.size());
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> idx(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(idx.begin(), idx.end());
  return apply_discard(adjacency, active, idx);
}

SrmOutput srm_layer(Var h_c, const Matrix& adjacency, const std::vector<bool>& active, Var h_e,
                    SrmLayerParams& params, const KernelBank& bank, const RefinementOptions& options,
                    const std::vector<std::size_t>* forced_discard) {
  Tape& t = h_e.tape();
  if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) {
    throw Error("srm_layer: evidence graph has no active node");
  }
  RefinementParams& rp = params.refine;
  SrmOutput out;
  out.trace.raw_se = self_score(h_e, t.param(rp.w_se));
  out.trace.m = translation_matrix(h_e, h_c);
  out.trace.k = kernel_features(out.trace.m, bank);
  out.trace.raw_sc = claim_score(out.trace.k, t.param(rp.w_sc));
  Var adj = t.constant(adjacency);
  out.trace.scores = fuse_scores(adj, out.trace.raw_se, out.trace.raw_sc, rp.scorer_se, rp.scorer_sc, options.beta,
                                 options.crossed_contextualization);

  DiscardResult d = forced_discard
                        ? apply_discard(adjacency, active, *forced_discard)
                        : discard_topk(adjacency, out.trace.scores.s_r.value().data(), active, options.discard_rate);
  out.trace.discarded = d.discarded;
  out.features = ggnn_scaled_step(t.constant(d.adjacency), h_e, out.trace.scores.s_r, params.encoder).output;
  out.adjacency = std::move(d.adjacency);
  out.active = std::move(d.active);
  return out;
}

}  // namespace getral
