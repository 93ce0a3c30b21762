#pragma once

#include <optional>
#include <string>
#include <vector>

#include "getral/autodiff.hpp"
#include "getral/rng.hpp"

namespace getral {

struct AttentionHead {
  Param w_c;  // (m + q) x m
  Param w_p;  // m x 1
};

/// Multi-head additive attention; heads are concatenated.
struct AttentionParams {
  std::vector<AttentionHead> heads;
  std::size_t key_dim = 0;
  std::size_t query_dim = 0;

  static AttentionParams init(std::size_t heads, std::size_t key_dim, std::size_t query_dim, Rng& rng);
  std::size_t output_dim() const { return heads.size() * key_dim; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t h = 0; h < heads.size(); ++h) {
      f(prefix + ".head" + std::to_string(h) + ".w_c", heads[h].w_c);
      f(prefix + ".head" + std::to_string(h) + ".w_p", heads[h].w_p);
    }
  }
};

struct AttentionOutput {
  Var output;  // 1 x heads*m
  std::vector<Var> alpha;  // per head, 1 x (active count)
  /// Per head, weights over all key rows; inactive rows hold exactly 0.
  std::vector<std::vector<double>> weights;
};

/// Mean of the active rows. Throws when no row is active.
Var claim_mean(Var h, const std::vector<bool>& active);

/// p_j = tanh([K_j; q] W_c), alpha = softmax(p W_p) over active rows, out = sum alpha_j K_j.
AttentionOutput attn_readout(Var keys, const std::vector<bool>& active, Var query, AttentionParams& params);

/// Evidence-level attention over every row of `evidences`. Throws Error("no evidences") when empty.
AttentionOutput doc_attention(Var evidences, Var claim, AttentionParams& params);

/// Learned speaker and publisher embeddings. Row 0 of each table is the unknown entry.
struct SideInfo {
  Param speakers;    // speakers x b
  Param publishers;  // publishers x b

  static SideInfo init(std::size_t speaker_count, std::size_t publisher_count, std::size_t dim, Rng& rng);
  std::size_t dim() const { return speakers.value.cols(); }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".speakers", speakers);
    f(prefix + ".publishers", publishers);
  }
};

struct SideLookup {
  Var row;
  bool unknown = false;
};

/// Looks up row `id` of a side table; out-of-range or absent ids use row 0.
SideLookup side_row(Tape& tape, Param& table, std::optional<std::size_t> id);

struct EvidenceRepresentation {
  Var claim;      // h_c = [h_c^r; s]
  Var evidences;  // rows h_e^g = [h_e^r; p]
  bool speaker_unknown = false;
  std::vector<bool> publisher_unknown;
};

EvidenceRepresentation evidence_representation(Var claim_readout, std::span<const Var> evidence_readouts,
                                               std::optional<std::size_t> speaker,
                                               std::span<const std::optional<std::size_t>> publishers,
                                               SideInfo& side);

struct ClassifierParams {
  Param w_f;  // D x 2
  Param b_f;  // 1 x 2

  static ClassifierParams zeros(std::size_t input_dim);
  static ClassifierParams init(std::size_t input_dim, Rng& rng);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".w_f", w_f);
    f(prefix + ".b_f", b_f);
  }
};

/// Softmax(h W_f + b_f); index 1 is the fake class.
Var classify(Var h, ClassifierParams& params);

/// -(y log p + (1 - y) log(1 - p)) with p = y_hat[1] clamped to [1e-12, 1 - 1e-12].
Var cross_entropy(Var y_hat, int label);

}  // namespace getral
