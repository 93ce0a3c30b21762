#pragma once

// Full model assembly: claim and evidence graphs, encoders, refinement,
// hierarchical attention, side information and the classifier, plus the
// batch objective with adversarial views.

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "getral/config.hpp"
#include "getral/contrastive.hpp"
#include "getral/dataset.hpp"
#include "getral/ggnn.hpp"
#include "getral/readout.hpp"
#include "getral/refinement.hpp"
#include "getral/text_graph.hpp"

namespace getral {

/// Word, speaker and publisher indices. Index 0 of each is the unknown entry.
struct Lexicon {
  Vocab words;
  Vocab speakers;
  Vocab publishers;

  /// Collects every token, speaker and publisher of the given instances.
  static Lexicon build(std::span<const ClaimInstance> instances);
};

struct EncodedInstance {
  std::string id;
  int label = 0;
  TokenGraph claim;
  std::vector<TokenGraph> evidences;
  std::optional<std::size_t> speaker;
  std::vector<std::optional<std::size_t>> publishers;
};

/// Tokenizes and builds graphs (node features are left empty; they come from
/// the embedding parameter at forward time). Empty evidences are dropped and
/// evidences past max_evidences truncated. Throws Error naming the instance
/// when the claim or every evidence is empty.
EncodedInstance encode_instance(const ClaimInstance& instance, const Lexicon& lexicon, const ModelConfig& config);

/// Encodes a dataset, skipping rejected instances with a warning on `warnings`.
std::vector<EncodedInstance> encode_dataset(std::span<const ClaimInstance> instances, const Lexicon& lexicon,
                                            const ModelConfig& config, std::ostream* warnings = nullptr);

struct ModelParams {
  Param embedding;  // vocab x d
  std::vector<GgnnParams> claim_encoder;
  GgnnParams evidence_encoder;
  std::vector<SrmLayerParams> srm;
  AttentionParams word_attention;
  AttentionParams doc_attention;
  SideInfo side;
  ClassifierParams classifier;

  /// `embeddings` supplies the initial word vectors; its dim must equal config.embed_dim.
  static ModelParams init(const ModelConfig& config, const Lexicon& lexicon, const EmbeddingTable& embeddings,
                          Rng& rng);

  std::size_t joint_dim() const;

  template <typename F>
  void visit(F&& f) {
    f(std::string("embedding"), embedding);
    for (std::size_t i = 0; i < claim_encoder.size(); ++i)
      claim_encoder[i].visit("claim_encoder." + std::to_string(i), f);
    evidence_encoder.visit("evidence_encoder", f);
    for (std::size_t i = 0; i < srm.size(); ++i) srm[i].visit("srm." + std::to_string(i), f);
    word_attention.visit("word_attention", f);
    doc_attention.visit("doc_attention", f);
    side.visit("side", f);
    classifier.visit("classifier", f);
  }

  std::vector<Param*> all_params(bool include_embedding = true);
};

/// Gathers the embedding rows used by a set of instances once per tape.
class EmbeddingLookup {
 public:
  EmbeddingLookup(Tape& tape, Param& table, bool trainable, std::span<const EncodedInstance* const> instances);
  Var features(const std::vector<std::size_t>& node_words);

 private:
  Var rows_;
  std::unordered_map<std::size_t, std::size_t> local_;
};

/// Discrete decisions of one forward pass: discard sets per evidence per SRM
/// layer and the adversarial perturbation. Replaying them holds the
/// non-differentiable parts fixed.
struct InstanceChoices {
  std::vector<std::vector<std::vector<std::size_t>>> discards;
  std::optional<Matrix> perturbation;
};

struct InstanceForward {
  Var y_hat;
  Var joint;      // h
  Var claim;      // h_c
  Var evidences;  // H_e^g
  Var ce;
  AttentionOutput doc;
  std::vector<AttentionOutput> word;
  std::vector<std::vector<bool>> evidence_active;
  InstanceChoices choices;
};

KernelBank model_kernels(const ModelConfig& config);

InstanceForward forward_instance(Tape& tape, ModelParams& params, const ModelConfig& config,
                                 const EncodedInstance& instance, EmbeddingLookup& lookup,
                                 const InstanceChoices* frozen = nullptr);

struct BatchForward {
  std::vector<InstanceForward> instances;
  std::vector<AdversarialView> views;
  Var ce;    // mean over instances
  Var cl;
  Var loss;  // ce + lambda * cl
};

/// Forward pass for a batch. Adversarial views are built when
/// config.adversarial is set (whatever lambda is) and join the contrastive
/// pool. `frozen`, when given, holds one InstanceChoices per instance.
BatchForward forward_batch(Tape& tape, ModelParams& params, const TrainConfig& config,
                           std::span<const EncodedInstance* const> batch,
                           const std::vector<InstanceChoices>* frozen = nullptr);

}  // namespace getral
