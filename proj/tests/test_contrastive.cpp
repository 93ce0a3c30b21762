#include <doctest.h>

#include <cmath>
#include <numeric>

#include "getral/contrastive.hpp"
#include "getral/grad_check.hpp"

using namespace getral;

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Written-formula loss: anchors are the first `anchors` rows.
double oracle(const Matrix& reps, const std::vector<int>& labels, std::size_t anchors, double tau, bool standard) {
  double total = 0;
  int used = 0;
  for (std::size_t a = 0; a < anchors; ++a) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t j = 0; j < reps.rows(); ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? pos : neg).push_back(j);
    }
    if (pos.empty() || neg.empty()) continue;
    double denom = 0;
    for (std::size_t j = 0; j < reps.rows(); ++j)
      if (j != a && (standard || labels[j] != labels[a])) denom += std::exp(cosine(reps.row(a), reps.row(j)) / tau);
    double s = 0;
    for (std::size_t p : pos) s += std::log(std::exp(cosine(reps.row(a), reps.row(p)) / tau) / denom);
    total += -s / double(pos.size());
    ++used;
  }
  return used ? total / used : 0.0;
}

double loss_of(const Matrix& reps, const std::vector<int>& labels, std::size_t anchors, ContrastiveOptions opt = {}) {
  Tape t;
  return supcon_loss(t.constant(reps), labels, anchors, opt).value().item();
}

void randomize(AttentionParams& p, Rng& rng) {
  p.visit("", [&](const std::string&, Param& q) { q.value = rng.uniform_matrix(q.value.rows(), q.value.cols(), -1, 1); });
}

struct Toy {
  AttentionParams doc;
  ClassifierParams cls;
  Matrix evidences;
  Matrix claim;
  int label = 1;
};

Toy make_toy(Rng& rng, std::size_t n) {
  Toy toy{AttentionParams::init(2, 3, 2, rng), ClassifierParams::init(2 + 6, rng), rng.uniform_matrix(n, 3, -1, 1),
          rng.uniform_matrix(1, 2, -1, 1)};
  randomize(toy.doc, rng);
  return toy;
}

struct ToyForward {
  Var evidences, claim, joint, ce;
  AttentionOutput doc;
};

ToyForward forward(Tape& t, Toy& toy, const Matrix& evidences) {
  ToyForward f;
  f.evidences = t.variable(evidences);
  f.claim = t.constant(toy.claim);
  f.doc = doc_attention(f.evidences, f.claim, toy.doc);
  Var parts[] = {f.claim, f.doc.output};
  f.joint = concat_cols(parts);
  f.ce = cross_entropy(classify(f.joint, toy.cls), toy.label);
  return f;
}

}  // namespace

TEST_CASE("single positive and single negative hand case") {
  const Matrix reps = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}});
  const double got = loss_of(reps, {1, 1, 0}, 1, {1.0, false});
  CHECK(got == -1.0);
}

TEST_CASE("degenerate batches give zero") {
  Rng rng(51);
  const Matrix reps = rng.uniform_matrix(4, 3, -1, 1);
  CHECK(loss_of(reps, {1, 1, 1, 1}, 4) == 0.0);
  CHECK(loss_of(reps, {0, 1, 1, 1}, 1) == 0.0);  // lone anchor has no positives
}

TEST_CASE("loss matches the written formula") {
  Rng rng(52);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + rng.index(6);
    const Matrix reps = rng.uniform_matrix(n, 4, -1, 1);
    std::vector<int> labels(n);
    for (auto& y : labels) y = int(rng.index(2));
    const std::size_t anchors = 1 + rng.index(n);
    for (bool standard : {false, true}) {
      const double want = oracle(reps, labels, anchors, 0.5, standard);
      CHECK(std::abs(loss_of(reps, labels, anchors, {0.5, standard}) - want) <= 1e-12);
    }
  }
}

TEST_CASE("positive moving away raises the loss") {
  const std::vector<int> labels = {1, 1, 0};
  double prev = -1e300;
  for (double angle : {0.0, 0.4, 0.8, 1.2, 1.5707963267948966}) {
    const Matrix reps = Matrix::from_rows({{1, 0, 0}, {std::cos(angle), 0, std::sin(angle)}, {0, 1, 0}});
    const double l = loss_of(reps, labels, 1, {0.3, false});
    CHECK(l > prev);
    prev = l;
  }
}

TEST_CASE("permutation and scaling invariance") {
  Rng rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 6;
    const Matrix reps = rng.uniform_matrix(n, 5, -1, 1);
    std::vector<int> labels(n);
    for (auto& y : labels) y = int(rng.index(2));
    const double base = loss_of(reps, labels, n);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Matrix pr(n, 5);
    std::vector<int> pl(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 5; ++c) pr(i, c) = reps(perm[i], c);
      pl[i] = labels[perm[i]];
    }
    CHECK(std::abs(loss_of(pr, pl, n) - base) <= 1e-12);

    Matrix scaled = reps;
    for (std::size_t i = 0; i < n; ++i)
      for (double& x : scaled.row(i)) x *= 0.1 + double(i);
    CHECK(std::abs(loss_of(scaled, labels, n) - base) <= 1e-10);
  }
}

TEST_CASE("views join the pool but are not anchors") {
  Rng rng(54);
  const Matrix anchors = rng.uniform_matrix(3, 4, -1, 1);
  const Matrix views = rng.uniform_matrix(3, 4, -1, 1);
  const std::vector<int> labels = {0, 1, 0};
  Matrix pool(6, 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 4; ++c) {
      pool(i, c) = anchors(i, c);
      pool(3 + i, c) = views(i, c);
    }
  Tape t;
  const double got = supcon_loss(t.constant(anchors), t.constant(views), labels, {}).value().item();
  CHECK(std::abs(got - oracle(pool, {0, 1, 0, 0, 1, 0}, 3, 0.1, false)) <= 1e-12);
}

TEST_CASE("supcon gradients") {
  Rng rng(55);
  Param reps(rng.uniform_matrix(5, 3, -1, 1));
  const std::vector<int> labels = {0, 1, 1, 0, 1};
  Param* ps[] = {&reps};
  for (bool standard : {false, true}) {
    auto f = [&](Tape& t) { return supcon_loss(t.param(reps), labels, 3, {0.5, standard}); };
    CHECK(grad_check_params(f, ps, 1e-5, 1e-4).pass);
  }
}

TEST_CASE("total loss") {
  Tape t;
  Var ce = t.variable(Matrix(1, 1, 0.5));
  Var cl = t.variable(Matrix(1, 1, -1.0));
  CHECK(total_loss(ce, cl, 0.0).value().item() == 0.5);
  CHECK(total_loss(ce, cl, 0.0).id() == ce.id());
  CHECK(std::abs(total_loss(ce, cl, 0.1).value().item() - 0.4) <= 1e-15);
}

TEST_CASE("joint gradient is linear in the two terms") {
  Rng rng(56);
  Param w(rng.uniform_matrix(4, 3, -1, 1));
  const Matrix x = rng.uniform_matrix(4, 4, -1, 1);
  const std::vector<int> labels = {0, 1, 1, 0};
  auto build = [&](Tape& t, int which) {
    Var reps = tanh(matmul(t.constant(x), t.param(w)));
    Var ce = sum(mul(reps, reps));
    Var cl = supcon_loss(reps, labels, 4, {});
    return which == 0 ? ce : which == 1 ? cl : total_loss(ce, cl, 0.3);
  };
  Matrix g[3];
  for (int k = 0; k < 3; ++k) {
    Tape t;
    Var leaf = t.param(w);
    t.backward(build(t, k));
    g[k] = t.grad(leaf);
  }
  for (std::size_t i = 0; i < g[2].size(); ++i) CHECK(std::abs(g[2][i] - (g[0][i] + 0.3 * g[1][i])) <= 1e-12);
}

TEST_CASE("adversarial view matches a recomputation oracle") {
  Rng rng(57);
  for (int trial = 0; trial < 10; ++trial) {
    Toy toy = make_toy(rng, 2 + rng.index(3));
    toy.label = int(rng.index(2));
    const double eps = rng.uniform(0.2, 2.0);

    Tape t;
    ToyForward f = forward(t, toy, toy.evidences);
    auto view = adversarial_view(f.evidences, f.claim, f.joint, f.doc, f.ce, toy.doc, eps);
    REQUIRE(view.applied);

    const auto& w0 = f.doc.weights[0];
    const std::size_t k = std::size_t(std::max_element(w0.begin(), w0.end()) - w0.begin());
    CHECK(view.evidence == k);

    Matrix g;
    {
      Tape t2;
      ToyForward f2 = forward(t2, toy, toy.evidences);
      t2.backward(f2.ce);
      g = t2.grad(f2.evidences);
    }
    double norm = 0;
    for (double v : g.row(k)) norm += v * v;
    norm = std::sqrt(norm);
    Matrix moved = toy.evidences;
    for (std::size_t c = 0; c < 3; ++c) moved(k, c) += eps * g(k, c) / norm;

    Tape t3;
    ToyForward f3 = forward(t3, toy, moved);
    CHECK(max_abs_diff(view.representation.value(), f3.joint.value()) <= 1e-12);

    double pn = 0;
    for (std::size_t r = 0; r < view.perturbation.rows(); ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        if (r != k) CHECK(view.perturbation(r, c) == 0.0);
        pn += view.perturbation(r, c) * view.perturbation(r, c);
      }
    CHECK(std::abs(std::sqrt(pn) - eps) <= 1e-10);
  }
}

TEST_CASE("single evidence with zero projection picks row zero") {
  Rng rng(58);
  Toy toy = make_toy(rng, 1);
  for (auto& h : toy.doc.heads) h.w_c.value.fill(0.0);
  Tape t;
  ToyForward f = forward(t, toy, toy.evidences);
  auto view = adversarial_view(f.evidences, f.claim, f.joint, f.doc, f.ce, toy.doc, 1.0);
  CHECK(f.doc.weights[0] == std::vector<double>{1.0});
  CHECK(view.evidence == 0);
  CHECK(view.applied);
}

TEST_CASE("vanishing gradient skips the view") {
  Rng rng(59);
  Toy toy = make_toy(rng, 2);
  toy.cls = ClassifierParams::zeros(8);
  Tape t;
  ToyForward f = forward(t, toy, toy.evidences);
  auto view = adversarial_view(f.evidences, f.claim, f.joint, f.doc, f.ce, toy.doc, 1.0);
  CHECK_FALSE(view.applied);
  CHECK(view.representation.id() == f.joint.id());
}

TEST_CASE("the perturbation is a constant on the tape") {
  Rng rng(60);
  Toy toy = make_toy(rng, 3);
  Param ev(toy.evidences);
  auto f = [&](Tape& t, const Matrix* frozen) {
    Var e = t.param(ev);
    Var c = t.constant(toy.claim);
    auto doc = doc_attention(e, c, toy.doc);
    Var parts[] = {c, doc.output};
    Var joint = concat_cols(parts);
    Var ce = cross_entropy(classify(joint, toy.cls), 1);
    return adversarial_view(e, c, joint, doc, ce, toy.doc, 1.0, frozen);
  };
  Matrix frozen;
  {
    Tape t;
    frozen = f(t, nullptr).perturbation;
  }
  const Matrix wts = rng.uniform_matrix(1, 8, -1, 1);
  Param* ps[] = {&ev};
  auto loss = [&](Tape& t) { return sum(mul(f(t, &frozen).representation, t.constant(wts))); };
  CHECK(grad_check_params(loss, ps, 1e-5, 1e-4).pass);
}
