#include "getral/readout.hpp"

#include <cmath>

namespace getral {

AttentionParams AttentionParams::init(std::size_t heads, std::size_t key_dim, std::size_t query_dim, Rng& rng) {
  if (heads == 0) throw Error("attention needs at least one head");
  AttentionParams p;
  p.key_dim = key_dim;
  p.query_dim = query_dim;
  const double bc = 1.0 / std::sqrt(static_cast<double>(key_dim + query_dim));
  const double bp = 1.0 / std::sqrt(static_cast<double>(key_dim));
  for (std::size_t h = 0; h < heads; ++h) {
    AttentionHead head;
    head.w_c = Param(rng.uniform_matrix(key_dim + query_dim, key_dim, -bc, bc));
    head.w_p = Param(rng.uniform_matrix(key_dim, 1, -bp, bp));
    p.heads.push_back(std::move(head));
  }
  return p;
}

namespace {

std::vector<std::size_t> active_rows(const std::vector<bool>& active) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) idx.push_back(i);
  return idx;
}

}  // namespace

Var claim_mean(Var h, const std::vector<bool>& active) {
  if (active.size() != h.rows()) throw ShapeError("claim_mean: mask size does not match " + h.value().shape_str());
  const auto idx = active_rows(active);
  if (idx.empty()) throw Error("claim_mean: no active node");
  return mean_rows(gather_rows(h, idx));
}

AttentionOutput attn_readout(Var keys, const std::vector<bool>& active, Var query, AttentionParams& params) {
  if (active.size() != keys.rows()) {
    throw ShapeError("attn_readout: mask size does not match keys " + keys.value().shape_str());
  }
  if (keys.cols() != params.key_dim || query.rows() != 1 || query.cols() != params.query_dim) {
    throw ShapeError("attn_readout: keys " + keys.value().shape_str() + " / query " + query.value().shape_str() +
                     " do not match parameters (m=" + std::to_string(params.key_dim) +
                     ", q=" + std::to_string(params.query_dim) + ")");
  }
  const auto idx = active_rows(active);
  if (idx.empty()) throw Error("attn_readout: no active key");

  Tape& t = keys.tape();
  Var k = idx.size() == keys.rows() ? keys : gather_rows(keys, idx);
  Var q = matmul(t.constant(Matrix(idx.size(), 1, 1.0)), query);
  const Var kq_parts[] = {k, q};
  Var kq = concat_cols(kq_parts);

  AttentionOutput out;
  std::vector<Var> head_outputs;
  for (AttentionHead& head : params.heads) {
    Var p = tanh(matmul(kq, t.param(head.w_c)));
    Var alpha = softmax_rows(transpose(matmul(p, t.param(head.w_p))));
    head_outputs.push_back(matmul(alpha, k));
    std::vector<double> w(active.size(), 0.0);
    for (std::size_t j = 0; j < idx.size(); ++j) w[idx[j]] = alpha.value()(0, j);
    out.weights.push_back(std::move(w));
    out.alpha.push_back(alpha);
  }
  out.output = head_outputs.size() == 1 ? head_outputs[0] : concat_cols(head_outputs);
  return out;
}

AttentionOutput doc_attention(Var evidences, Var claim, AttentionParams& params) {
  if (evidences.rows() == 0) throw Error("no evidences");
  return attn_readout(evidences, std::vector<bool>(evidences.rows(), true), claim, params);
}

SideInfo SideInfo::init(std::size_t speaker_count, std::size_t publisher_count, std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  return SideInfo{Param(rng.uniform_matrix(std::max<std::size_t>(speaker_count, 1), dim, -bound, bound)),
                  Param(rng.uniform_matrix(std::max<std::size_t>(publisher_count, 1), dim, -bound, bound))};
}

SideLookup side_row(Tape& tape, Param& table, std::optional<std::size_t> id) {
  SideLookup out;
  std::size_t row = 0;
  if (id && *id > 0 && *id < table.value.rows()) {
    row = *id;
  } else {
    out.unknown = true;
  }
  out.row = gather_rows(tape.param(table), {row});
  return out;
}

EvidenceRepresentation evidence_representation(Var claim_readout, std::span<const Var> evidence_readouts,
                                               std::optional<std::size_t> speaker,
                                               std::span<const std::optional<std::size_t>> publishers,
                                               SideInfo& side) {
  if (publishers.size() != evidence_readouts.size()) {
    throw ShapeError("evidence_representation: " + std::to_string(evidence_readouts.size()) + " evidences but " +
                     std::to_string(publishers.size()) + " publishers");
  }
  if (evidence_readouts.empty()) throw Error("no evidences");
  Tape& t = claim_readout.tape();
  EvidenceRepresentation out;
  SideLookup s = side_row(t, side.speakers, speaker);
  out.speaker_unknown = s.unknown;
  const Var claim_parts[] = {claim_readout, s.row};
  out.claim = concat_cols(claim_parts);

  std::vector<Var> rows;
  for (std::size_t i = 0; i < evidence_readouts.size(); ++i) {
    SideLookup p = side_row(t, side.publishers, publishers[i]);
    out.publisher_unknown.push_back(p.unknown);
    const Var parts[] = {evidence_readouts[i], p.row};
    rows.push_back(concat_cols(parts));
  }
  out.evidences = rows.size() == 1 ? rows[0] : concat_rows(rows);
  return out;
}

ClassifierParams ClassifierParams::zeros(std::size_t input_dim) {
  return ClassifierParams{Param(Matrix(input_dim, 2)), Param(Matrix(1, 2))};
}

ClassifierParams ClassifierParams::init(std::size_t input_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  return ClassifierParams{Param(rng.uniform_matrix(input_dim, 2, -bound, bound)), Param(Matrix(1, 2))};
}

Var classify(Var h, ClassifierParams& params) {
  if (h.rows() != 1 || h.cols() != params.w_f.value.rows()) {
    throw ShapeError("classify: representation " + h.value().shape_str() + " vs weights " +
                     params.w_f.value.shape_str());
  }
  Tape& t = h.tape();
  return softmax_rows(add_row(matmul(h, t.param(params.w_f)), t.param(params.b_f)));
}

Var cross_entropy(Var y_hat, int label) {
  if (label != 0 && label != 1) throw DomainError("cross_entropy: label must be 0 or 1");
  if (y_hat.rows() != 1 || y_hat.cols() != 2) throw ShapeError("cross_entropy: expected 1x2 probabilities");
  Tape& t = y_hat.tape();
  Var fake = matmul(y_hat, t.constant(Matrix::from_rows({{0.0}, {1.0}})));
  Var p = clamp(fake, kLogFloor, 1.0 - kLogFloor);
  if (label == 1) return scale(log(p), -1.0);
  return scale(log(add_scalar(scale(p, -1.0), 1.0)), -1.0);
}

}  // namespace getral
