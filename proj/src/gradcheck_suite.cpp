#include "getral/gradcheck_suite.hpp"

#include <cmath>

#include "getral/contrastive.hpp"
#include "getral/model.hpp"
#include "getral/readout.hpp"
#include "getral/refinement.hpp"

namespace getral {

namespace {

struct Shape {
  std::size_t rows;
  std::size_t cols;
};

constexpr Shape kShapes[] = {{3, 4}, {2, 5}};
constexpr int kTrials = 5;

// Random weighted sum, so every output coordinate reaches the loss differently.
Var weighted(Tape& t, Var out, Rng& rng) {
  return sum(mul(out, t.constant(rng.uniform_matrix(out.rows(), out.cols(), -1.0, 1.0))));
}

// Values in [-2, 2] kept at least `gap` away from every point in `avoid`.
Matrix away_from(Rng& rng, std::size_t r, std::size_t c, std::initializer_list<double> avoid, double gap) {
  Matrix m(r, c);
  for (double& v : m.data()) {
    bool ok = false;
    while (!ok) {
      v = rng.uniform(-2.0, 2.0);
      ok = true;
      for (double a : avoid) ok = ok && std::abs(v - a) > gap;
    }
  }
  return m;
}

using Unary = std::function<Var(Tape&, Var, Rng&, Shape)>;

struct PrimitiveCase {
  const char* name;
  Unary op;
  std::function<Matrix(Rng&, Shape)> input;
};

Var other(Tape& t, Rng& rng, std::size_t r, std::size_t c) {
  return t.constant(rng.uniform_matrix(r, c, -2.0, 2.0));
}

Matrix uniform_input(Rng& rng, Shape s) { return rng.uniform_matrix(s.rows, s.cols, -2.0, 2.0); }

std::vector<PrimitiveCase> primitive_cases() {
  std::vector<PrimitiveCase> cases = {
      {"matmul(lhs)", [](Tape& t, Var x, Rng& g, Shape s) { return matmul(x, other(t, g, s.cols, 3)); },
       uniform_input},
      {"matmul(rhs)", [](Tape& t, Var x, Rng& g, Shape s) { return matmul(other(t, g, 2, s.rows), x); },
       uniform_input},
      {"add", [](Tape& t, Var x, Rng& g, Shape s) { return add(other(t, g, s.rows, s.cols), x); }, uniform_input},
      {"sub(lhs)", [](Tape& t, Var x, Rng& g, Shape s) { return sub(x, other(t, g, s.rows, s.cols)); },
       uniform_input},
      {"sub(rhs)", [](Tape& t, Var x, Rng& g, Shape s) { return sub(other(t, g, s.rows, s.cols), x); },
       uniform_input},
      {"mul", [](Tape& t, Var x, Rng& g, Shape s) { return mul(x, other(t, g, s.rows, s.cols)); }, uniform_input},
      {"mul(self)", [](Tape&, Var x, Rng&, Shape) { return mul(x, x); }, uniform_input},
      {"scale", [](Tape&, Var x, Rng&, Shape) { return scale(x, -1.7); }, uniform_input},
      {"add_scalar", [](Tape&, Var x, Rng&, Shape) { return add_scalar(x, 0.3); }, uniform_input},
      {"add_row(matrix)", [](Tape& t, Var x, Rng& g, Shape s) { return add_row(x, other(t, g, 1, s.cols)); },
       uniform_input},
      {"add_row(row)",
       [](Tape& t, Var x, Rng& g, Shape s) { return add_row(other(t, g, s.rows, s.cols), gather_rows(x, {0})); },
       uniform_input},
      {"mul_col(matrix)", [](Tape& t, Var x, Rng& g, Shape s) { return mul_col(x, other(t, g, s.rows, 1)); },
       uniform_input},
      {"mul_col(col)",
       [](Tape& t, Var x, Rng& g, Shape s) {
         return mul_col(other(t, g, s.rows, s.cols), transpose(gather_rows(transpose(x), {0})));
       },
       uniform_input},
      {"sigmoid", [](Tape&, Var x, Rng&, Shape) { return sigmoid(x); }, uniform_input},
      {"tanh", [](Tape&, Var x, Rng&, Shape) { return tanh(x); }, uniform_input},
      {"exp", [](Tape&, Var x, Rng&, Shape) { return exp(x); }, uniform_input},
      {"log", [](Tape&, Var x, Rng&, Shape) { return log(x); },
       [](Rng& g, Shape s) { return g.uniform_matrix(s.rows, s.cols, 0.2, 3.0); }},
      {"softmax_rows", [](Tape&, Var x, Rng&, Shape) { return softmax_rows(x); }, uniform_input},
      {"logsumexp_rows", [](Tape&, Var x, Rng&, Shape) { return logsumexp_rows(x); }, uniform_input},
      {"mean_rows", [](Tape&, Var x, Rng&, Shape) { return mean_rows(x); }, uniform_input},
      {"sum", [](Tape&, Var x, Rng&, Shape) { return sum(x); }, uniform_input},
      {"concat_cols",
       [](Tape& t, Var x, Rng& g, Shape s) {
         const Var parts[] = {other(t, g, s.rows, 2), x, tanh(x)};
         return concat_cols(parts);
       },
       uniform_input},
      {"concat_rows",
       [](Tape& t, Var x, Rng& g, Shape s) {
         const Var parts[] = {x, other(t, g, 1, s.cols), exp(x)};
         return concat_rows(parts);
       },
       uniform_input},
      {"gather_rows", [](Tape&, Var x, Rng&, Shape) { return gather_rows(x, {1, 0, 1}); }, uniform_input},
      {"masked_fill",
       [](Tape&, Var x, Rng&, Shape s) {
         std::vector<bool> mask(s.rows * s.cols);
         for (std::size_t i = 0; i < mask.size(); i += 2) mask[i] = true;
         return masked_fill(x, mask, -3.0);
       },
       uniform_input},
      {"cosine_rows(lhs)", [](Tape& t, Var x, Rng& g, Shape s) { return cosine_rows(x, other(t, g, 4, s.cols)); },
       uniform_input},
      {"cosine_rows(rhs)", [](Tape& t, Var x, Rng& g, Shape s) { return cosine_rows(other(t, g, 2, s.cols), x); },
       uniform_input},
      {"cosine_rows(self)", [](Tape&, Var x, Rng&, Shape) { return cosine_rows(x, x); }, uniform_input},
      {"l2_norm_rows", [](Tape&, Var x, Rng&, Shape) { return l2_norm_rows(x); }, uniform_input},
      {"clamp", [](Tape&, Var x, Rng&, Shape) { return clamp(x, -1.0, 1.0); },
       [](Rng& g, Shape s) { return away_from(g, s.rows, s.cols, {-1.0, 1.0}, 1e-3); }},
      {"transpose", [](Tape&, Var x, Rng&, Shape) { return transpose(x); }, uniform_input},
  };
  return cases;
}

GradCheckReport merge(GradCheckReport a, const GradCheckReport& b) {
  if (b.max_rel_err > a.max_rel_err || a.worst.empty()) {
    a.max_rel_err = b.max_rel_err;
    a.worst = b.worst;
  }
  a.coordinates += b.coordinates;
  a.pass = a.pass && b.pass;
  return a;
}

Param random_param(Rng& rng, std::size_t r, std::size_t c, double bound = 1.0) {
  return Param(rng.uniform_matrix(r, c, -bound, bound));
}

// Small symmetric normalized adjacency of a random graph with self loops.
Matrix random_adjacency(Rng& rng, std::size_t n) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.5) a(i, j) = a(j, i) = 1.0;
  return normalize_adjacency(a);
}

std::vector<Param*> ggnn_list(GgnnParams& g) {
  std::vector<Param*> out;
  g.visit("", [&](const std::string&, Param& p) { out.push_back(&p); });
  return out;
}

// Biases start at zero; give them values so their gradients are exercised at a generic point.
void jitter_biases(GgnnParams& g, Rng& rng) {
  for (Param* b : {&g.b_z, &g.b_r, &g.b_h}) b->value = rng.uniform_matrix(1, b->value.cols(), -0.5, 0.5);
}

ClaimInstance toy_instance(const std::string& id, int label, const std::string& claim,
                           std::vector<std::string> evidences, std::optional<std::string> speaker) {
  ClaimInstance c;
  c.id = id;
  c.label = label;
  c.claim = claim;
  c.speaker = std::move(speaker);
  for (std::size_t i = 0; i < evidences.size(); ++i) c.evidences.push_back({evidences[i], "p" + std::to_string(i)});
  return c;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, double step, double tol) {
  std::vector<GradCheckCase> out;
  Rng root(seed);

  Rng prim = root.fork(1);
  for (const auto& c : primitive_cases()) {
    GradCheckReport total;
    for (const Shape& s : kShapes) {
      for (int trial = 0; trial < kTrials; ++trial) {
        const Matrix x = c.input(prim, s);
        const std::uint64_t salt = prim.next_u64();
        auto f = [&](Tape& t, Var v) {
          Rng local(salt);
          Var y = c.op(t, v, local, s);
          return weighted(t, y, local);
        };
        total = merge(total, grad_check(f, x, step, tol));
      }
    }
    out.push_back({std::string("primitive ") + c.name, total});
  }

  const std::size_t d = 3;
  {
    Rng rng = root.fork(2);
    const std::size_t n = 4;
    const Matrix adj = random_adjacency(rng, n);
    GgnnParams g = GgnnParams::init(d, rng);
    jitter_biases(g, rng);
    Param h = random_param(rng, n, d);
    Param scores = random_param(rng, n, 1, 2.0);
    const Matrix w = rng.uniform_matrix(n, d, -1.0, 1.0);

    auto params = ggnn_list(g);
    params.push_back(&h);
    out.push_back({"ggnn_step", grad_check_params(
                                    [&](Tape& t) {
                                      Var y = ggnn_step(t.constant(adj), t.param(h), g).output;
                                      return sum(mul(y, t.constant(w)));
                                    },
                                    params, step, tol)});
    params.push_back(&scores);
    out.push_back({"ggnn_scaled_step", grad_check_params(
                                           [&](Tape& t) {
                                             Var y = ggnn_scaled_step(t.constant(adj), t.param(h), t.param(scores), g)
                                                         .output;
                                             return sum(mul(y, t.constant(w)));
                                           },
                                           params, step, tol)});
  }

  for (bool crossed : {false, true}) {
    Rng rng = root.fork(crossed ? 4 : 3);
    const std::size_t n = 6;
    const std::size_t claim_nodes = 3;
    const KernelBank bank = KernelBank::default_bank(5);
    const Matrix adj = random_adjacency(rng, n);
    std::vector<bool> active(n, true);
    active[5] = false;
    SrmLayerParams layer{RefinementParams::init(d, bank.size(), rng), GgnnParams::init(d, rng)};
    layer.visit("", [&](const std::string&, Param& p) {
      p.value = rng.uniform_matrix(p.value.rows(), p.value.cols(), -1.0, 1.0);
    });
    Param hc = random_param(rng, claim_nodes, d);
    // Non-matching nodes put the exact-match kernel near -1e5, where a 1e-5 step
    // on W_sc is no longer small. Evidence rows are claim rows plus noise, so
    // every node sits inside the kernel's responsive range.
    Param he(Matrix(n, d));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) he.value(i, c) = hc.value(i % claim_nodes, c) + rng.uniform(-0.03, 0.03);
    for (std::size_t c = 0; c < d; ++c) he.value(2, c) = hc.value(2, c);
    // The other kernels still respond in the tens to hundreds; scale W_sc so scores stay O(1).
    for (double& v : layer.refine.w_sc.value.data()) v *= 0.1;
    const RefinementOptions opts{0.5, 0.3, crossed};
    const Matrix w = rng.uniform_matrix(n, d, -1.0, 1.0);

    std::vector<std::size_t> frozen;
    {
      Tape t;
      frozen = srm_layer(t.param(hc), adj, active, t.param(he), layer, bank, opts).trace.discarded;
    }
    std::vector<Param*> params = {&hc, &he};
    layer.visit("", [&](const std::string&, Param& p) { params.push_back(&p); });
    out.push_back({crossed ? "srm_layer(crossed)" : "srm_layer",
                   grad_check_params(
                       [&](Tape& t) {
                         SrmOutput s = srm_layer(t.param(hc), adj, active, t.param(he), layer, bank, opts, &frozen);
                         return sum(mul(s.features, t.constant(w)));
                       },
                       params, step, tol)});
  }

  {
    Rng rng = root.fork(5);
    const std::size_t m = 4;
    const std::size_t q = 3;
    AttentionParams attn = AttentionParams::init(2, m, q, rng);
    Param keys = random_param(rng, 5, m);
    Param query = random_param(rng, 1, q);
    const std::vector<bool> active = {true, false, true, true, true};
    const Matrix w = rng.uniform_matrix(1, attn.output_dim(), -1.0, 1.0);
    std::vector<Param*> params = {&keys, &query};
    attn.visit("", [&](const std::string&, Param& p) { params.push_back(&p); });
    out.push_back({"attn_readout", grad_check_params(
                                       [&](Tape& t) {
                                         Var y = attn_readout(t.param(keys), active, t.param(query), attn).output;
                                         return sum(mul(y, t.constant(w)));
                                       },
                                       params, step, tol)});
  }

  for (int label : {0, 1}) {
    Rng rng = root.fork(6 + static_cast<std::uint64_t>(label));
    ClassifierParams cls = ClassifierParams::init(6, rng);
    Param h = random_param(rng, 1, 6);
    std::vector<Param*> params = {&h, &cls.w_f, &cls.b_f};
    out.push_back({"classify+cross_entropy(y=" + std::to_string(label) + ")",
                   grad_check_params([&](Tape& t) { return cross_entropy(classify(t.param(h), cls), label); },
                                     params, step, tol)});
  }

  for (bool standard : {false, true}) {
    Rng rng = root.fork(standard ? 9 : 8);
    Param anchors = random_param(rng, 4, 5);
    Param views = random_param(rng, 4, 5);
    const std::vector<int> labels = {0, 1, 1, 0};
    const ContrastiveOptions opts{0.1, standard};
    std::vector<Param*> params = {&anchors, &views};
    out.push_back({standard ? "supcon_loss(standard denominator)" : "supcon_loss",
                   grad_check_params(
                       [&](Tape& t) { return supcon_loss(t.param(anchors), t.param(views), labels, opts); }, params,
                       step, tol)});
  }

  {
    Rng rng = root.fork(10);
    TrainConfig config;
    config.model.embed_dim = 4;
    config.model.side_dim = 3;
    config.model.kernels = 3;
    config.model.word_heads = 2;
    config.model.doc_heads = 2;
    config.model.zero_init_classifier = false;
    config.lambda = 0.5;
    config.tau = 0.5;
    // Evidences reuse the claim's words and window graph, and both encoders
    // share values, so evidence nodes exactly match claim nodes and the
    // exact-match kernel stays in its responsive range (see the SRM case).
    const std::vector<ClaimInstance> raw = {
        toy_instance("a", 0, "red fox jumps high", {"red fox jumps high", "high jumps fox red"}, "ann"),
        toy_instance("b", 1, "blue cat sleeps", {"sleeps cat blue", "blue cat sleeps"}, std::nullopt),
    };
    const Lexicon lex = Lexicon::build(raw);
    Rng init_rng = rng.fork(77);
    EmbeddingTable table = random_embeddings(lex.words, config.model.embed_dim, init_rng);
    for (double& v : table.vectors.data()) v *= 8.0;
    ModelParams model = ModelParams::init(config.model, lex, table, init_rng);
    // Unit-scale weights keep the second-order attention and gate paths well above the
    // finite-difference noise floor (about 1e-11 here).
    model.visit([&](const std::string& name, Param& p) {
      if (name != "embedding") p.value = init_rng.uniform_matrix(p.value.rows(), p.value.cols(), -1.0, 1.0);
    });
    for (auto* g : {&model.evidence_encoder, &model.srm[0].encoder}) jitter_biases(*g, init_rng);
    {
      std::vector<Param*> src = ggnn_list(model.evidence_encoder);
      std::vector<Param*> dst = ggnn_list(model.claim_encoder[0]);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    }
    for (double& v : model.srm[0].refine.w_sc.value.data()) v *= 0.1;
    model.classifier.b_f.value = init_rng.uniform_matrix(1, 2, -0.5, 0.5);
    std::vector<EncodedInstance> data;
    for (const auto& r : raw) data.push_back(encode_instance(r, lex, config.model));
    const std::vector<const EncodedInstance*> batch = {&data[0], &data[1]};

    std::vector<InstanceChoices> frozen;
    {
      Tape t;
      BatchForward f = forward_batch(t, model, config, batch);
      for (const auto& inst : f.instances) frozen.push_back(inst.choices);
    }
    out.push_back({"end-to-end joint loss",
                   grad_check_params([&](Tape& t) { return forward_batch(t, model, config, batch, &frozen).loss; },
                                     model.all_params(), step, tol)});
  }
  return out;
}

}  // namespace getral
