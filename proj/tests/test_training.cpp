#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "getral/metrics.hpp"
#include "getral/model.hpp"
#include "getral/optimizer.hpp"
#include "getral/synth.hpp"
#include "getral/trainer.hpp"

using namespace getral;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.model.embed_dim = 4;
  c.model.side_dim = 3;
  c.model.kernels = 3;
  c.model.word_heads = 2;
  c.model.doc_heads = 2;
  c.batch_size = 4;
  c.max_epochs = 3;
  c.lr = 1e-3;
  return c;
}

struct Fixture {
  TrainConfig config = small_config();
  std::vector<ClaimInstance> raw;
  Lexicon lexicon;
  ModelParams params;
  std::vector<EncodedInstance> encoded;

  explicit Fixture(std::size_t n = 8, std::uint64_t seed = 3, bool random_classifier = false) {
    raw = synthetic_corpus({seed, n, 0.0});
    lexicon = Lexicon::build(raw);
    Rng rng(seed);
    Rng er = rng.fork(1);
    config.model.zero_init_classifier = !random_classifier;
    params = ModelParams::init(config.model, lexicon, random_embeddings(lexicon.words, 4, er), rng);
    encoded = encode_dataset(raw, lexicon, config.model);
  }

  std::vector<const EncodedInstance*> batch() const {
    std::vector<const EncodedInstance*> b;
    for (const auto& e : encoded) b.push_back(&e);
    return b;
  }
};

std::vector<Matrix> snapshot(ModelParams& p) {
  std::vector<Matrix> out;
  for (Param* q : p.all_params()) out.push_back(q->value);
  return out;
}

ClaimInstance make(std::string id, int label, std::string claim, std::vector<std::string> evidences) {
  ClaimInstance c;
  c.id = std::move(id);
  c.label = label;
  c.claim = std::move(claim);
  for (auto& e : evidences) c.evidences.push_back({e, std::nullopt});
  return c;
}

}  // namespace

TEST_CASE("hand confusion example") {
  Confusion c{2, 1, 1, 6};
  MetricsReport r = metrics_from_confusion(c);
  CHECK(std::abs(r.fake_class.precision - 2.0 / 3) <= 1e-15);
  CHECK(std::abs(r.fake_class.recall - 2.0 / 3) <= 1e-15);
  CHECK(std::abs(r.fake_class.f1 - 2.0 / 3) <= 1e-15);
  CHECK(r.f1_micro == 0.8);
  CHECK(r.accuracy() == 0.8);
}

TEST_CASE("perfect and one-class predictions") {
  const std::vector<int> y = {0, 1, 1, 0, 1, 0};
  MetricsReport p = compute_metrics(y, y);
  CHECK(p.f1_macro == 1.0);
  CHECK(p.f1_micro == 1.0);
  CHECK(p.true_class.precision == 1.0);
  CHECK(p.fake_class.recall == 1.0);
  const std::vector<int> ones(6, 1);
  MetricsReport o = compute_metrics(ones, y);
  CHECK(o.f1_macro < o.f1_micro);
  CHECK(o.true_class.f1 == 0.0);
  CHECK(f1_score(0.0, 0.0) == 0.0);
}

TEST_CASE("metrics agree with a from-definition computation") {
  Rng rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> pred(200), lab(200);
    for (auto& x : pred) x = int(rng.index(2));
    for (auto& x : lab) x = int(rng.index(2));
    auto per_class = [&](int pos) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < 200; ++i) {
        tp += pred[i] == pos && lab[i] == pos;
        fp += pred[i] == pos && lab[i] != pos;
        fn += pred[i] != pos && lab[i] == pos;
      }
      const double p = tp + fp > 0 ? tp / (tp + fp) : 0, r = tp + fn > 0 ? tp / (tp + fn) : 0;
      return std::array<double, 3>{p, r, p + r > 0 ? 2 * p * r / (p + r) : 0};
    };
    double correct = 0;
    for (std::size_t i = 0; i < 200; ++i) correct += pred[i] == lab[i];
    const auto t = per_class(0), f = per_class(1);
    MetricsReport r = compute_metrics(pred, lab);
    CHECK(r.true_class.precision == t[0]);
    CHECK(r.true_class.recall == t[1]);
    CHECK(r.true_class.f1 == t[2]);
    CHECK(r.fake_class.f1 == f[2]);
    CHECK(r.f1_macro == (t[2] + f[2]) / 2);
    CHECK(r.f1_micro == correct / 200);
  }
}

TEST_CASE("metrics json keys") {
  auto j = to_json(compute_metrics(std::vector<int>{1, 0}, std::vector<int>{1, 1}));
  CHECK(j.contains("f1_macro"));
  CHECK(j.contains("fake_precision"));
  CHECK(j["confusion"]["fn"] == 1);
}

TEST_CASE("adam matches a scalar reference on a quadratic") {
  AdamOptions o;
  o.lr = 0.05;
  o.weight_decay = 0.01;
  Param w(Matrix(1, 1, 0.5));
  Adam adam(o, {&w});
  double ref = 0.5, m = 0, v = 0;
  for (int t = 1; t <= 100; ++t) {
    w.grad[0] = 2 * (w.value[0] - 3);
    adam.step();
    const double g = 2 * (ref - 3);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    ref = ref * (1 - o.lr * o.weight_decay) - o.lr * mh / (std::sqrt(vh) + 1e-8);
    CHECK(std::abs(w.value[0] - ref) <= 1e-12);
  }
  CHECK(adam.steps() == 100);
}

TEST_CASE("decoupled decay shrinks weights without gradient") {
  AdamOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  Rng rng(62);
  Param w(rng.uniform_matrix(3, 3, -1, 1));
  Adam adam(o, {&w});
  double prev = frobenius_norm(w.value);
  for (int t = 0; t < 5; ++t) {
    adam.step();
    const double now = frobenius_norm(w.value);
    CHECK(now < prev);
    CHECK(std::abs(now - prev * 0.95) <= 1e-12);
    prev = now;
  }
}

TEST_CASE("stratified split") {
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(i % 3 == 0);
  Split s = stratified_split(labels, 0.2, 9);
  CHECK(s.train.size() + s.valid.size() == 40);
  int v1 = 0;
  for (auto i : s.valid) v1 += labels[i];
  CHECK(v1 == 3);  // round(0.2 * 14)
  CHECK(s.valid.size() == 3 + 5);
  CHECK(std::is_sorted(s.valid.begin(), s.valid.end()));
  Split again = stratified_split(labels, 0.2, 9);
  CHECK(again.valid == s.valid);
  CHECK(stratified_split(labels, 0.2, 10).valid != s.valid);

  const std::vector<int> tiny = {0, 0, 1, 1};
  Split t = stratified_split(tiny, 0.01, 1);
  CHECK(t.valid.size() == 2);
}

TEST_CASE("stratified folds partition the data") {
  std::vector<int> labels;
  for (int i = 0; i < 23; ++i) labels.push_back(i % 2);
  auto folds = stratified_folds(labels, 5, 4);
  REQUIRE(folds.size() == 5);
  std::multiset<std::size_t> seen;
  for (const auto& f : folds) {
    seen.insert(f.valid.begin(), f.valid.end());
    CHECK(f.train.size() + f.valid.size() == 23);
    int ones = 0;
    for (auto i : f.valid) ones += labels[i];
    CHECK(ones >= 2);
  }
  CHECK(seen.size() == 23);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 23);
}

TEST_CASE("encoding rejects empty instances") {
  TrainConfig c = small_config();
  std::vector<ClaimInstance> raw = {make("a", 0, "red fox", {"red fox jumps"}), make("b", 1, "...", {"blue"}),
                                    make("c", 1, "blue cat", {"", "  "}), make("d", 0, "x", {"", "y"})};
  Lexicon lex = Lexicon::build(raw);
  std::ostringstream warn;
  auto enc = encode_dataset(raw, lex, c.model, &warn);
  REQUIRE(enc.size() == 2);
  CHECK(enc[0].id == "a");
  CHECK(enc[1].evidences.size() == 1);
  CHECK(warn.str().find("b") != std::string::npos);
  CHECK(warn.str().find("c") != std::string::npos);
  CHECK_THROWS_WITH_AS(encode_instance(raw[1], lex, c.model), doctest::Contains("b"), Error);
}

TEST_CASE("evidences are truncated in file order") {
  TrainConfig c = small_config();
  c.model.max_evidences = 2;
  auto inst = make("t", 0, "a b", {"a", "b", "c"});
  Lexicon lex = Lexicon::build(std::span(&inst, 1));
  auto enc = encode_instance(inst, lex, c.model);
  REQUIRE(enc.evidences.size() == 2);
  CHECK(enc.evidences[1].node_words == std::vector<std::size_t>{lex.words.index("b")});
}

TEST_CASE("degenerate one-token instance runs") {
  TrainConfig c = small_config();
  auto inst = make("one", 1, "x", {"y"});
  Lexicon lex = Lexicon::build(std::span(&inst, 1));
  Rng rng(1);
  Rng er = rng.fork(1);
  ModelParams p = ModelParams::init(c.model, lex, random_embeddings(lex.words, 4, er), rng);
  auto enc = encode_instance(inst, lex, c.model);
  Tape t;
  const EncodedInstance* ptr = &enc;
  EmbeddingLookup look(t, p.embedding, true, std::span(&ptr, 1));
  auto f = forward_instance(t, p, c.model, enc, look);
  CHECK(f.y_hat.value().all_finite());
  CHECK(f.joint.cols() == p.joint_dim());
}

TEST_CASE("zero parameters predict one half") {
  Fixture fx;
  for (Param* q : fx.params.all_params()) q->value.fill(0.0);
  Tape t;
  auto b = fx.batch();
  EmbeddingLookup look(t, fx.params.embedding, true, b);
  for (const auto& e : fx.encoded) {
    auto f = forward_instance(t, fx.params, fx.config.model, e, look);
    CHECK(f.y_hat.value() == Matrix::from_rows({{0.5, 0.5}}));
  }
}

TEST_CASE("evidence order only permutes the document weights") {
  Fixture fx(4, 5, true);
  EncodedInstance e = fx.encoded[0];
  REQUIRE(e.evidences.size() >= 2);
  EncodedInstance r = e;
  std::reverse(r.evidences.begin(), r.evidences.end());
  std::reverse(r.publishers.begin(), r.publishers.end());
  Tape t;
  const EncodedInstance* ptrs[] = {&e, &r};
  EmbeddingLookup look(t, fx.params.embedding, true, ptrs);
  auto a = forward_instance(t, fx.params, fx.config.model, e, look);
  auto b = forward_instance(t, fx.params, fx.config.model, r, look);
  CHECK(max_abs_diff(a.joint.value(), b.joint.value()) <= 1e-10);
  auto wa = a.doc.weights[0], wb = b.doc.weights[0];
  std::reverse(wb.begin(), wb.end());
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(std::abs(wa[i] - wb[i]) <= 1e-12);
}

TEST_CASE("batch loss is the mean of instance losses") {
  Fixture fx(6, 7, true);
  fx.config.lambda = 0.0;
  auto b = fx.batch();
  Tape t;
  auto bf = forward_batch(t, fx.params, fx.config, b);
  double total = 0;
  for (const auto& e : fx.encoded) {
    Tape ti;
    const EncodedInstance* ptr = &e;
    EmbeddingLookup look(ti, fx.params.embedding, true, std::span(&ptr, 1));
    total += forward_instance(ti, fx.params, fx.config.model, e, look).ce.value().item();
  }
  CHECK(std::abs(bf.ce.value().item() - total / double(fx.encoded.size())) <= 1e-12);
  CHECK(bf.loss.value().item() == bf.ce.value().item());
}

TEST_CASE("zero lambda gradients equal a build without views") {
  Fixture fx(6, 8, true);
  fx.config.lambda = 0.0;
  auto b = fx.batch();
  auto grads = [&](bool adversarial) {
    TrainConfig c = fx.config;
    c.adversarial = adversarial;
    for (Param* q : fx.params.all_params()) q->zero_grad();
    Tape t;
    auto bf = forward_batch(t, fx.params, c, b);
    t.backward(bf.loss);
    t.accumulate_param_grads();
    std::vector<Matrix> g;
    for (Param* q : fx.params.all_params()) g.push_back(q->grad);
    return g;
  };
  auto with = grads(true), without = grads(false);
  REQUIRE(with.size() == without.size());
  for (std::size_t i = 0; i < with.size(); ++i) CHECK(with[i] == without[i]);
}

TEST_CASE("zero step leaves parameters bitwise unchanged") {
  Fixture fx;
  fx.config.lambda = 0.0;
  fx.config.lr = 0.0;
  fx.config.max_epochs = 1;
  auto before = snapshot(fx.params);
  train(fx.params, fx.encoded, fx.encoded, fx.config);
  CHECK(snapshot(fx.params) == before);
}

TEST_CASE("training is deterministic and records history") {
  auto run = [] {
    Fixture fx(8, 11, false);
    fx.config.max_epochs = 3;
    fx.config.patience = 100;
    auto r = train(fx.params, fx.encoded, fx.encoded, fx.config);
    std::ostringstream os;
    write_history_csv(os, r.history);
    return std::pair(os.str(), r.history.size());
  };
  auto [a, n] = run();
  auto [b, m] = run();
  CHECK(a == b);
  CHECK(n == 3);
  CHECK(a.rfind("epoch,train_loss,ce,cl,valid_f1_macro,valid_f1_micro\n", 0) == 0);
}

TEST_CASE("zero-initialized classifier starts at ln 2") {
  Fixture fx(8, 12, false);
  fx.config.max_epochs = 1;
  fx.config.lr = 0.0;
  auto r = train(fx.params, fx.encoded, fx.encoded, fx.config);
  CHECK(std::abs(r.history[0].ce - std::log(2.0)) <= 1e-12);
}

TEST_CASE("early stopping honours patience") {
  Fixture fx(8, 13, false);
  fx.config.lr = 0.0;
  fx.config.lambda = 0.0;
  fx.config.max_epochs = 50;
  fx.config.patience = 2;
  auto r = train(fx.params, fx.encoded, fx.encoded, fx.config);
  CHECK(r.history.size() == 3);
  // every epoch ties, the last one is kept
  CHECK(r.best_epoch == 2);
}

TEST_CASE("non-finite loss aborts with coordinates") {
  Fixture fx;
  fx.params.embedding.value.fill(std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(train(fx.params, fx.encoded, fx.encoded, fx.config),
                       doctest::Contains("epoch 0, batch 0"), Error);
}

TEST_CASE("evaluate is pure and predictions are consistent") {
  Fixture fx(8, 14, true);
  MetricsReport a = evaluate(fx.params, fx.config.model, fx.encoded);
  MetricsReport b = evaluate(fx.params, fx.config.model, fx.encoded);
  CHECK(to_json(a) == to_json(b));
  auto preds = predict(fx.params, fx.config.model, fx.encoded);
  REQUIRE(preds.size() == fx.encoded.size());
  std::vector<int> p, l;
  for (const auto& x : preds) {
    CHECK(std::abs(x.p_true + x.p_fake - 1.0) <= 1e-12);
    CHECK(x.doc_alpha.size() == fx.config.model.doc_heads);
    p.push_back(x.predicted);
    l.push_back(x.label);
  }
  CHECK(to_json(compute_metrics(p, l)) == to_json(a));
  CHECK(predict_label(Matrix::from_rows({{0.5, 0.5}})) == 0);
  CHECK(predict_label(Matrix::from_rows({{0.4, 0.6}})) == 1);
}
