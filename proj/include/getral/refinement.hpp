#pragma once

// Redundancy-driven structure refinement of evidence graphs: per-node scores
// from a node-self projection and from kernel-pooled claim relevance are
// contextualized by small gated graph layers, fused, and the highest-scoring
// nodes are masked out before a score-scaled propagation step.

#include <span>
#include <string>
#include <vector>

#include "getral/ggnn.hpp"

namespace getral {

struct KernelBank {
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t size() const { return mu.size(); }

  /// One exact-match kernel (mu = 1, sigma = 1e-3) plus k-1 kernels with
  /// sigma = 0.1 centred on k-1 equal-width bins over [-1, 1].
  static KernelBank default_bank(std::size_t k);
};

struct RefinementParams {
  Param w_se;  // d x 1
  Param w_sc;  // k x 1
  GgnnParams scorer_se;  // over 1-dim scores
  GgnnParams scorer_sc;

  static RefinementParams init(std::size_t dim, std::size_t kernels, Rng& rng);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_se", w_se);
    f(prefix + ".w_sc", w_sc);
    scorer_se.visit(prefix + ".scorer_se", f);
    scorer_sc.visit(prefix + ".scorer_sc", f);
  }
};

/// One SRM layer: refinement scorer plus the score-scaled encoder that follows it.
struct SrmLayerParams {
  RefinementParams refine;
  GgnnParams encoder;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    refine.visit(prefix + ".refine", f);
    encoder.visit(prefix + ".encoder", f);
  }
};

struct RefinementOptions {
  double beta = 0.5;
  double discard_rate = 0.3;
  /// Contextualize s_se from S_sc and s_sc from S_se, as the equations are printed.
  bool crossed_contextualization = false;
};

Var self_score(Var h_e, Var w_se);
Var translation_matrix(Var h_e, Var h_c);
/// K(i, t) = log sum_j exp(-(M(i, j) - mu_t)^2 / (2 sigma_t^2)). Throws on an empty claim.
Var kernel_features(Var m, const KernelBank& bank);
Var claim_score(Var k, Var w_sc);

struct FusedScores {
  Var s_se;
  Var s_sc;
  Var s_r;
};

FusedScores fuse_scores(Var adjacency, Var raw_se, Var raw_sc, GgnnParams& scorer_se, GgnnParams& scorer_sc,
                        double beta, bool crossed = false);

struct DiscardResult {
  Matrix adjacency;
  std::vector<bool> active;
  std::vector<std::size_t> discarded;
};

/// floor(rate * active), capped so at least one node stays active.
std::size_t discard_count(double rate, std::size_t active);

/// Masks the discard_count(rate, active) active nodes with the largest scores
/// (ties: lower index first) by zeroing their adjacency rows and columns.
DiscardResult discard_topk(const Matrix& adjacency, std::span<const double> scores, const std::vector<bool>& active,
                           double rate);
/// Applies a given discard set.
DiscardResult apply_discard(const Matrix& adjacency, const std::vector<bool>& active,
                            const std::vector<std::size_t>& discarded);

struct RefinementTrace {
  Var m;
  Var k;
  Var raw_se;
  Var raw_sc;
  FusedScores scores;
  std::vector<std::size_t> discarded;
};

struct SrmOutput {
  Matrix adjacency;  // after masking
  std::vector<bool> active;
  Var features;
  RefinementTrace trace;
};

/// Score, discard, then run the score-scaled encoder on the masked graph.
/// `forced_discard`, when given, replaces the top-k selection (used to hold
/// the mask fixed during finite-difference checks).
SrmOutput srm_layer(Var h_c, const Matrix& adjacency, const std::vector<bool>& active, Var h_e,
                    SrmLayerParams& params, const KernelBank& bank, const RefinementOptions& options,
                    const std::vector<std::size_t>* forced_discard = nullptr);

}  // namespace getral
