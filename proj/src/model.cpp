#include "getral/model.hpp"

#include <algorithm>

namespace getral {

Lexicon Lexicon::build(std::span<const ClaimInstance> instances) {
  Lexicon lex;
  for (const auto& inst : instances) {
    for (const auto& w : tokenize(inst.claim)) lex.words.add(w);
    if (inst.speaker) lex.speakers.add(*inst.speaker);
    for (const auto& e : inst.evidences) {
      for (const auto& w : tokenize(e.text)) lex.words.add(w);
      if (e.publisher) lex.publishers.add(*e.publisher);
    }
  }
  return lex;
}

namespace {

TokenGraph encode_text(const std::string& text, const Vocab& vocab, std::size_t window, std::size_t max_len) {
  const EmbeddingTable empty{Matrix(vocab.size(), 0), {}};
  return build_graph(tokenize(text), vocab, window, max_len, empty);
}

std::optional<std::size_t> side_index(const Vocab& v, const std::optional<std::string>& name) {
  if (!name) return std::nullopt;
  return v.index(*name);
}

}  // namespace

EncodedInstance encode_instance(const ClaimInstance& instance, const Lexicon& lexicon, const ModelConfig& config) {
  EncodedInstance out;
  out.id = instance.id;
  out.label = instance.label;
  if (tokenize(instance.claim).empty()) throw Error("instance '" + instance.id + "': empty claim");
  out.claim = encode_text(instance.claim, lexicon.words, config.window, config.max_claim_len);
  out.speaker = side_index(lexicon.speakers, instance.speaker);
  for (const auto& e : instance.evidences) {
    if (out.evidences.size() == config.max_evidences) break;
    if (tokenize(e.text).empty()) continue;
    out.evidences.push_back(encode_text(e.text, lexicon.words, config.window, config.max_evidence_len));
    out.publishers.push_back(side_index(lexicon.publishers, e.publisher));
  }
  if (out.evidences.empty()) throw Error("instance '" + instance.id + "': every evidence is empty");
  return out;
}

std::vector<EncodedInstance> encode_dataset(std::span<const ClaimInstance> instances, const Lexicon& lexicon,
                                            const ModelConfig& config, std::ostream* warnings) {
  std::vector<EncodedInstance> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    try {
      out.push_back(encode_instance(inst, lexicon, config));
    } catch (const Error& e) {
      if (warnings) *warnings << "warning: skipping " << e.what() << '\n';
    }
  }
  return out;
}

ModelParams ModelParams::init(const ModelConfig& config, const Lexicon& lexicon, const EmbeddingTable& embeddings,
                              Rng& rng) {
  const std::size_t d = config.embed_dim;
  if (embeddings.dim() != d) {
    throw ShapeError("embedding dim " + std::to_string(embeddings.dim()) + " does not match embed-dim " +
                     std::to_string(d));
  }
  if (embeddings.vectors.rows() != lexicon.words.size()) throw ShapeError("embedding rows do not match vocabulary");
  Rng enc_rng = rng.fork(1);
  Rng srm_rng = rng.fork(2);
  Rng attn_rng = rng.fork(3);
  Rng side_rng = rng.fork(4);
  Rng cls_rng = rng.fork(5);

  ModelParams p;
  p.embedding = Param(embeddings.vectors);
  for (std::size_t i = 0; i < config.claim_layers; ++i) p.claim_encoder.push_back(GgnnParams::init(d, enc_rng));
  p.evidence_encoder = GgnnParams::init(d, enc_rng);
  for (std::size_t i = 0; i < config.srm_layers; ++i) {
    SrmLayerParams layer;
    layer.refine = RefinementParams::init(d, config.kernels, srm_rng);
    layer.encoder = GgnnParams::init(d, srm_rng);
    p.srm.push_back(std::move(layer));
  }
  const std::size_t b = config.side_dim;
  p.word_attention = AttentionParams::init(config.word_heads, d, d, attn_rng);
  p.doc_attention = AttentionParams::init(config.doc_heads, config.word_heads * d + b, d + b, attn_rng);
  p.side = SideInfo::init(lexicon.speakers.size(), lexicon.publishers.size(), b, side_rng);
  p.classifier = config.zero_init_classifier ? ClassifierParams::zeros(p.joint_dim())
                                             : ClassifierParams::init(p.joint_dim(), cls_rng);
  return p;
}

std::size_t ModelParams::joint_dim() const {
  const std::size_t d = embedding.value.cols();
  const std::size_t b = side.dim();
  return d + b + doc_attention.heads.size() * (word_attention.heads.size() * d + b);
}

std::vector<Param*> ModelParams::all_params(bool include_embedding) {
  std::vector<Param*> out;
  visit([&](const std::string&, Param& p) {
    if (include_embedding || &p != &embedding) out.push_back(&p);
  });
  return out;
}

EmbeddingLookup::EmbeddingLookup(Tape& tape, Param& table, bool trainable,
                                 std::span<const EncodedInstance* const> instances) {
  std::vector<std::size_t> words;
  auto collect = [&](const TokenGraph& g) {
    for (std::size_t w : g.node_words) {
      if (local_.emplace(w, words.size()).second) words.push_back(w);
    }
  };
  for (const EncodedInstance* inst : instances) {
    collect(inst->claim);
    for (const auto& e : inst->evidences) collect(e);
  }
  if (words.empty()) return;
  for (std::size_t w : words) {
    if (w >= table.value.rows()) throw Error("word index " + std::to_string(w) + " outside embedding table");
  }
  if (trainable) {
    rows_ = gather_rows(tape.param(table), words);
  } else {
    Matrix m(words.size(), table.value.cols());
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto src = table.value.row(words[i]);
      std::copy(src.begin(), src.end(), m.row(i).begin());
    }
    rows_ = tape.constant(std::move(m));
  }
}

Var EmbeddingLookup::features(const std::vector<std::size_t>& node_words) {
  std::vector<std::size_t> idx;
  idx.reserve(node_words.size());
  for (std::size_t w : node_words) {
    const auto it = local_.find(w);
    if (it == local_.end()) throw Error("EmbeddingLookup: word not registered for this batch");
    idx.push_back(it->second);
  }
  return gather_rows(rows_, std::move(idx));
}

KernelBank model_kernels(const ModelConfig& config) { return KernelBank::default_bank(config.kernels); }

InstanceForward forward_instance(Tape& tape, ModelParams& params, const ModelConfig& config,
                                 const EncodedInstance& instance, EmbeddingLookup& lookup,
                                 const InstanceChoices* frozen) {
  InstanceForward out;
  const KernelBank bank = model_kernels(config);
  const RefinementOptions ropts{config.beta, config.discard_rate, config.crossed_contextualization};

  Var h_c = lookup.features(instance.claim.node_words);
  Var claim_adj = tape.constant(instance.claim.normalized);
  for (GgnnParams& layer : params.claim_encoder) h_c = ggnn_step(claim_adj, h_c, layer).output;
  Var claim_readout = claim_mean(h_c, instance.claim.active);

  std::vector<Var> evidence_readouts;
  out.choices.discards.resize(instance.evidences.size());
  for (std::size_t e = 0; e < instance.evidences.size(); ++e) {
    const TokenGraph& g = instance.evidences[e];
    Var h_e = ggnn_step(tape.constant(g.normalized), lookup.features(g.node_words), params.evidence_encoder).output;
    Matrix adjacency = g.normalized;
    std::vector<bool> active = g.active;
    for (std::size_t l = 0; l < params.srm.size(); ++l) {
      const std::vector<std::size_t>* forced = nullptr;
      if (frozen) forced = &frozen->discards.at(e).at(l);
      SrmOutput s = srm_layer(h_c, adjacency, active, h_e, params.srm[l], bank, ropts, forced);
      out.choices.discards[e].push_back(s.trace.discarded);
      adjacency = std::move(s.adjacency);
      active = std::move(s.active);
      h_e = s.features;
    }
    AttentionOutput word = attn_readout(h_e, active, claim_readout, params.word_attention);
    evidence_readouts.push_back(word.output);
    out.word.push_back(std::move(word));
    out.evidence_active.push_back(std::move(active));
  }

  EvidenceRepresentation rep =
      evidence_representation(claim_readout, evidence_readouts, instance.speaker, instance.publishers, params.side);
  out.claim = rep.claim;
  out.evidences = rep.evidences;
  out.doc = doc_attention(rep.evidences, rep.claim, params.doc_attention);
  const Var parts[] = {rep.claim, out.doc.output};
  out.joint = concat_cols(parts);
  out.y_hat = classify(out.joint, params.classifier);
  out.ce = cross_entropy(out.y_hat, instance.label);
  return out;
}

BatchForward forward_batch(Tape& tape, ModelParams& params, const TrainConfig& config,
                           std::span<const EncodedInstance* const> batch,
                           const std::vector<InstanceChoices>* frozen) {
  if (batch.empty()) throw Error("forward_batch: empty batch");
  if (frozen && frozen->size() != batch.size()) throw ShapeError("forward_batch: frozen choices per instance");
  BatchForward out;
  EmbeddingLookup lookup(tape, params.embedding, !config.freeze_embeddings, batch);
  std::vector<Var> ces;
  std::vector<Var> joints;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.instances.push_back(
        forward_instance(tape, params, config.model, *batch[i], lookup, frozen ? &(*frozen)[i] : nullptr));
    ces.push_back(out.instances.back().ce);
    joints.push_back(out.instances.back().joint);
    labels.push_back(batch[i]->label);
  }
  out.ce = scale(sum(concat_rows(ces)), 1.0 / static_cast<double>(batch.size()));

  const ContrastiveOptions copts{config.tau, config.supcon_standard_denominator};
  Var anchors = concat_rows(joints);
  if (config.adversarial) {
    std::vector<Var> views;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      InstanceForward& f = out.instances[i];
      const Matrix* fixed = nullptr;
      if (frozen && (*frozen)[i].perturbation) fixed = &*(*frozen)[i].perturbation;
      out.views.push_back(adversarial_view(f.evidences, f.claim, f.joint, f.doc, f.ce, params.doc_attention,
                                           config.epsilon, fixed));
      f.choices.perturbation = out.views.back().perturbation;
      views.push_back(out.views.back().representation);
    }
    out.cl = supcon_loss(anchors, concat_rows(views), labels, copts);
  } else {
    out.cl = supcon_loss(anchors, labels, batch.size(), copts);
  }
  out.loss = total_loss(out.ce, out.cl, config.lambda);
  return out;
}

}  // namespace getral
