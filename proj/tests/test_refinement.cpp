#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "getral/grad_check.hpp"
#include "getral/refinement.hpp"

using namespace getral;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix loop_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

Matrix loop_ggnn(const Matrix& adj, const Matrix& h, const GgnnParams& p, const Matrix* scores) {
  const std::size_t n = h.rows(), d = h.cols();
  Matrix msg = loop_matmul(h, p.w_a.value);
  if (scores)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) msg(j, c) *= 1 - sig((*scores)[j]);
  Matrix a = loop_matmul(adj, msg);
  Matrix az = loop_matmul(a, p.w_z.value), hz = loop_matmul(h, p.u_z.value);
  Matrix ar = loop_matmul(a, p.w_r.value), hr = loop_matmul(h, p.u_r.value);
  Matrix z(n, d), rh(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      z(i, c) = sig(az(i, c) + hz(i, c) + p.b_z.value[c]);
      rh(i, c) = sig(ar(i, c) + hr(i, c) + p.b_r.value[c]) * h(i, c);
    }
  Matrix ah = loop_matmul(a, p.w_h.value), hh = loop_matmul(rh, p.u_h.value);
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c)
      out(i, c) = std::tanh(ah(i, c) + hh(i, c) + p.b_h.value[c]) * z(i, c) + h(i, c) * (1 - z(i, c));
  return out;
}

double loop_cos(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (std::sqrt(aa) < 1e-12 || std::sqrt(bb) < 1e-12) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

void randomize(GgnnParams& p, Rng& rng) {
  p.visit("", [&](const std::string&, Param& q) { q.value = rng.uniform_matrix(q.value.rows(), q.value.cols(), -1, 1); });
}

Matrix random_adjacency(std::size_t n, Rng& rng) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.1, 0.5);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = rng.uniform(0.2, 0.6);
  return a;
}

}  // namespace

TEST_CASE("self and claim score hand cases") {
  Tape t;
  Var h = t.constant(Matrix::identity(3));
  CHECK(self_score(h, t.constant(Matrix(3, 1))).value() == Matrix(3, 1));
  Var e1 = t.constant(Matrix::from_rows({{1}, {0}, {0}}));
  CHECK(self_score(h, e1).value() == Matrix::from_rows({{1}, {0}, {0}}));
  Var k = t.constant(Matrix::from_rows({{0, 1, 0}, {1, 0, 0}}));
  CHECK(claim_score(k, t.constant(Matrix(3, 1))).value() == Matrix(2, 1));
  CHECK(claim_score(k, t.constant(Matrix(3, 1, 1.0))).value() == Matrix::from_rows({{1}, {1}}));
  CHECK_THROWS_AS(self_score(h, t.constant(Matrix(3, 2))), ShapeError);
}

TEST_CASE("scores match loop oracles") {
  Rng rng(31);
  Tape t;
  const Matrix h = rng.uniform_matrix(5, 4, -1, 1), w = rng.uniform_matrix(4, 1, -1, 1);
  CHECK(max_abs_diff(self_score(t.constant(h), t.constant(w)).value(), loop_matmul(h, w)) <= 1e-12);
  const Matrix k = rng.uniform_matrix(5, 6, -1, 1), ws = rng.uniform_matrix(6, 1, -1, 1);
  CHECK(max_abs_diff(claim_score(t.constant(k), t.constant(ws)).value(), loop_matmul(k, ws)) <= 1e-12);
}

TEST_CASE("translation matrix hand cases") {
  Tape t;
  Var he = t.constant(Matrix::from_rows({{1, 1}, {0, 2}, {0.5, 0.5}}));
  Var hc = t.constant(Matrix::from_rows({{1, 0}, {1, 1}}));
  Matrix m = translation_matrix(he, hc).value();
  CHECK(std::abs(m(0, 0) - 1 / std::sqrt(2.0)) <= 1e-15);
  CHECK(std::abs(m(0, 1) - 1.0) <= 1e-15);
  CHECK(m(1, 0) == 0.0);
  CHECK(std::abs(m(2, 1) - 1.0) <= 1e-15);
}

TEST_CASE("translation rows are scale invariant") {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix he = rng.uniform_matrix(4, 5, -1, 1);
    const Matrix hc = rng.uniform_matrix(3, 5, -1, 1);
    Tape t;
    const Matrix m = translation_matrix(t.constant(he), t.constant(hc)).value();
    const double s = rng.uniform(0.1, 10);
    for (double& x : he.row(2)) x *= s;
    const Matrix m2 = translation_matrix(t.constant(he), t.constant(hc)).value();
    CHECK(max_abs_diff(m, m2) <= 1e-12);
    for (double x : m.values()) CHECK(std::abs(x) <= 1.0 + 1e-12);
  }
}

TEST_CASE("kernel feature hand cases") {
  KernelBank exact{{1.0}, {1e-3}};
  Tape t;
  CHECK(kernel_features(t.constant(Matrix::from_rows({{1.0}})), exact).value().item() == 0.0);
  CHECK(std::abs(kernel_features(t.constant(Matrix::from_rows({{1.0, 1.0}})), exact).value().item() - std::log(2.0)) <=
        1e-15);
  KernelBank mid{{0.9}, {0.1}};
  CHECK(kernel_features(t.constant(Matrix::from_rows({{0.9}})), mid).value().item() == 0.0);
  CHECK_THROWS_WITH(kernel_features(t.constant(Matrix(2, 0)), mid), "empty claim");
}

TEST_CASE("kernel features match a direct sum") {
  Rng rng(33);
  const KernelBank bank = KernelBank::default_bank(5);
  const Matrix m = rng.uniform_matrix(4, 3, -1, 1);
  Tape t;
  const Matrix k = kernel_features(t.constant(m), bank).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t q = 1; q < bank.size(); ++q) {
      double s = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        const double x = m(i, j) - bank.mu[q];
        s += std::exp(-x * x / (2 * bank.sigma[q] * bank.sigma[q]));
      }
      CHECK(std::abs(k(i, q) - std::log(s)) <= 1e-10);
    }
}

TEST_CASE("default kernel banks") {
  auto b11 = KernelBank::default_bank(11);
  CHECK(b11.size() == 11);
  CHECK(b11.mu[0] == 1.0);
  CHECK(b11.sigma[0] == 1e-3);
  for (std::size_t t = 1; t < 11; ++t) {
    CHECK(std::abs(b11.mu[t] - (-0.9 + 0.2 * double(t - 1))) <= 1e-12);
    CHECK(b11.sigma[t] == 0.1);
  }
  auto b2 = KernelBank::default_bank(2);
  CHECK(b2.mu == std::vector<double>{1.0, 0.0});
  auto b21 = KernelBank::default_bank(21);
  CHECK(std::abs(b21.mu[1] + 0.95) <= 1e-12);
  CHECK(std::abs(b21.mu[20] - 0.95) <= 1e-12);
  CHECK_THROWS(KernelBank::default_bank(1));
}

TEST_CASE("fusion endpoints and midpoint") {
  Rng rng(34);
  GgnnParams a = GgnnParams::init(1, rng), b = GgnnParams::init(1, rng);
  randomize(a, rng);
  randomize(b, rng);
  Tape t;
  Var adj = t.constant(random_adjacency(4, rng));
  Var se = t.constant(rng.uniform_matrix(4, 1, -1, 1)), sc = t.constant(rng.uniform_matrix(4, 1, -1, 1));
  auto f0 = fuse_scores(adj, se, sc, a, b, 0.0);
  auto f1 = fuse_scores(adj, se, sc, a, b, 1.0);
  auto fh = fuse_scores(adj, se, sc, a, b, 0.5);
  CHECK(f0.s_r.value() == f0.s_se.value());
  CHECK(f1.s_r.value() == f1.s_sc.value());
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::abs(fh.s_r.value()[i] - 0.5 * (fh.s_se.value()[i] + fh.s_sc.value()[i])) <= 1e-15);
  CHECK(max_abs_diff(f0.s_se.value(), loop_ggnn(adj.value(), se.value(), a, nullptr)) <= 1e-12);
  auto crossed = fuse_scores(adj, se, sc, a, b, 0.5, true);
  CHECK(max_abs_diff(crossed.s_se.value(), loop_ggnn(adj.value(), sc.value(), a, nullptr)) <= 1e-12);
  CHECK_THROWS_AS(fuse_scores(adj, se, sc, a, b, 1.5), DomainError);
}

TEST_CASE("fusion midpoint hand value") {
  // zero scorers pass half the raw score through: s = 0.5 * S
  GgnnParams a = GgnnParams::zeros(1), b = GgnnParams::zeros(1);
  Tape t;
  auto f = fuse_scores(t.constant(Matrix(1, 1, 1.0)), t.constant(Matrix(1, 1, 4.0)), t.constant(Matrix(1, 1, 8.0)), a,
                       b, 0.5);
  CHECK(f.s_se.value().item() == 2.0);
  CHECK(f.s_sc.value().item() == 4.0);
  CHECK(f.s_r.value().item() == 3.0);
}

TEST_CASE("discard count") {
  CHECK(discard_count(0.3, 10) == 3);
  CHECK(discard_count(0.29, 100) == 29);
  CHECK(discard_count(0.0, 10) == 0);
  CHECK(discard_count(0.5, 1) == 0);
  CHECK(discard_count(0.99, 2) == 1);
  CHECK(discard_count(0.3, 0) == 0);
}

TEST_CASE("top-k discard hand cases") {
  const Matrix adj = Matrix::from_rows({{0.5, 0.2, 0.3}, {0.2, 0.4, 0.1}, {0.3, 0.1, 0.6}});
  const std::vector<bool> all(3, true);
  const double s1[] = {0.9, 0.1, 0.5};
  auto d = discard_topk(adj, s1, all, 0.34);
  CHECK(d.discarded == std::vector<std::size_t>{0});
  CHECK(d.active == std::vector<bool>{false, true, true});
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(d.adjacency(0, j) == 0.0);
    CHECK(d.adjacency(j, 0) == 0.0);
  }
  CHECK(d.adjacency(1, 2) == 0.1);

  auto none = discard_topk(adj, s1, all, 0.0);
  CHECK(none.discarded.empty());
  CHECK(none.adjacency == adj);

  const Matrix two = Matrix::from_rows({{1, 1}, {1, 1}});
  const double tie[] = {0.5, 0.5};
  CHECK(discard_topk(two, tie, {true, true}, 0.5).discarded == std::vector<std::size_t>{0});

  const double s3[] = {5.0, 0.1, 0.5};
  auto skip = discard_topk(adj, s3, {false, true, true}, 0.5);
  CHECK(skip.discarded == std::vector<std::size_t>{2});
  CHECK_THROWS(discard_topk(adj, s3, {false, false, false}, 0.5));
  CHECK_THROWS_AS(discard_topk(adj, s3, all, 1.0), DomainError);
}

TEST_CASE("tie rule is independent of storage order") {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.index(8);
    std::vector<double> s(n);
    for (auto& x : s) x = double(rng.index(3));
    const std::vector<bool> act(n, true);
    auto d = discard_topk(Matrix(n, n), s, act, 0.4);
    // oracle: sort by (-score, index)
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
    std::vector<std::size_t> want(order.begin(), order.begin() + std::ptrdiff_t(discard_count(0.4, n)));
    std::sort(want.begin(), want.end());
    CHECK(d.discarded == want);
  }
}

TEST_CASE("srm layer matches a composition oracle") {
  Rng rng(36);
  const KernelBank bank = KernelBank::default_bank(5);
  for (int trial = 0; trial < 10; ++trial) {
    SrmLayerParams p{RefinementParams::init(3, 5, rng), GgnnParams::init(3, rng)};
    randomize(p.refine.scorer_se, rng);
    randomize(p.refine.scorer_sc, rng);
    randomize(p.encoder, rng);
    p.refine.w_sc.value = rng.uniform_matrix(5, 1, -0.01, 0.01);
    const Matrix hc = rng.uniform_matrix(3, 3, -1, 1);
    const Matrix he = rng.uniform_matrix(6, 3, -1, 1);
    const Matrix adj = random_adjacency(6, rng);
    std::vector<bool> active(6, true);
    active[4] = false;
    RefinementOptions opt{0.5, 0.3, false};

    Tape t;
    auto out = srm_layer(t.constant(hc), adj, active, t.constant(he), p, bank, opt);

    Matrix m(6, 3), k(6, 5);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 3; ++j) m(i, j) = loop_cos(he.row(i), hc.row(j));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t q = 0; q < 5; ++q) {
        std::vector<double> e(3);
        for (std::size_t j = 0; j < 3; ++j) {
          const double x = m(i, j) - bank.mu[q];
          e[j] = -x * x / (2 * bank.sigma[q] * bank.sigma[q]);
        }
        const double mx = *std::max_element(e.begin(), e.end());
        double s = 0;
        for (double v : e) s += std::exp(v - mx);
        k(i, q) = mx + std::log(s);
      }
    const Matrix s_se = loop_ggnn(adj, loop_matmul(he, p.refine.w_se.value), p.refine.scorer_se, nullptr);
    const Matrix s_sc = loop_ggnn(adj, loop_matmul(k, p.refine.w_sc.value), p.refine.scorer_sc, nullptr);
    Matrix s_r(6, 1);
    for (std::size_t i = 0; i < 6; ++i) s_r[i] = 0.5 * s_se[i] + 0.5 * s_sc[i];

    std::vector<std::size_t> cand = {0, 1, 2, 3, 5};
    std::stable_sort(cand.begin(), cand.end(), [&](auto a, auto b) { return s_r[a] > s_r[b]; });
    std::vector<std::size_t> idx(cand.begin(), cand.begin() + 1);  // floor(0.3 * 5) = 1
    CHECK(out.trace.discarded == idx);
    Matrix masked = adj;
    for (std::size_t j = 0; j < 6; ++j) masked(idx[0], j) = masked(j, idx[0]) = 0.0;
    const Matrix h_out = loop_ggnn(masked, he, p.encoder, &s_r);

    CHECK(max_abs_diff(out.trace.m.value(), m) <= 1e-12);
    CHECK(max_abs_diff(out.trace.k.value(), k) <= 1e-9);
    CHECK(max_abs_diff(out.trace.scores.s_r.value(), s_r) <= 1e-10);
    CHECK(max_abs_diff(out.features.value(), h_out) <= 1e-10);
    CHECK(out.adjacency == masked);
    CHECK_FALSE(out.active[idx[0]]);
    CHECK_FALSE(out.active[4]);
  }
}

TEST_CASE("neutral refinement equals a plain step") {
  Rng rng(37);
  SrmLayerParams p{RefinementParams::init(3, 5, rng), GgnnParams::init(3, rng)};
  randomize(p.encoder, rng);
  // Pass-through scorer (update gate closed) on the claim channel only; without exact
  // matches the exact-match kernel response is hugely negative, so every score is too.
  p.refine.scorer_sc = GgnnParams::zeros(1);
  p.refine.scorer_sc.b_z.value.fill(-50.0);
  p.refine.w_sc.value = Matrix(5, 1);
  p.refine.w_sc.value[0] = 1.0;
  const Matrix hc = rng.uniform_matrix(3, 3, -1, 1), he = rng.uniform_matrix(5, 3, -1, 1);
  const Matrix adj = random_adjacency(5, rng);
  Tape t;
  auto out = srm_layer(t.constant(hc), adj, std::vector<bool>(5, true), t.constant(he), p,
                       KernelBank::default_bank(5), {1.0, 0.0, false});
  for (double s : out.trace.scores.s_r.value().values()) CHECK(s < -50.0);
  const auto plain = ggnn_step(t.constant(adj), t.constant(he), p.encoder);
  CHECK(max_abs_diff(out.features.value(), plain.output.value()) <= 1e-12);
  CHECK(out.trace.discarded.empty());
}

TEST_CASE("single active node is never discarded") {
  Rng rng(38);
  SrmLayerParams p{RefinementParams::init(2, 3, rng), GgnnParams::init(2, rng)};
  Tape t;
  auto out = srm_layer(t.constant(rng.uniform_matrix(2, 2, -1, 1)), Matrix(1, 1, 1.0), {true},
                       t.constant(rng.uniform_matrix(1, 2, -1, 1)), p, KernelBank::default_bank(3), {0.5, 0.9, false});
  CHECK(out.trace.discarded.empty());
  CHECK(out.active == std::vector<bool>{true});
  CHECK(out.features.value().all_finite());
  CHECK_THROWS(srm_layer(t.constant(Matrix(1, 2, 1.0)), Matrix(1, 1, 1.0), {false}, t.constant(Matrix(1, 2, 1.0)), p,
                         KernelBank::default_bank(3), {}));
}

TEST_CASE("stacked layers shrink the active set monotonically") {
  Rng rng(39);
  const KernelBank bank = KernelBank::default_bank(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.index(10);
    Tape t;
    Var hc = t.constant(rng.uniform_matrix(4, 3, -1, 1));
    Var h = t.constant(rng.uniform_matrix(n, 3, -1, 1));
    Matrix adj = random_adjacency(n, rng);
    std::vector<bool> active(n, true);
    std::vector<SrmLayerParams> layers;
    for (int l = 0; l < 3; ++l) layers.push_back({RefinementParams::init(3, 5, rng), GgnnParams::init(3, rng)});
    for (auto& layer : layers) {
      const std::size_t before = std::count(active.begin(), active.end(), true);
      auto out = srm_layer(hc, adj, active, h, layer, bank, {0.5, 0.3, false});
      CHECK(out.trace.discarded.size() == discard_count(0.3, before));
      for (std::size_t i = 0; i < n; ++i)
        if (out.active[i]) CHECK(active[i]);
      for (std::size_t i : out.trace.discarded) {
        CHECK(active[i]);
        for (std::size_t j = 0; j < n; ++j) CHECK(out.adjacency(i, j) == 0.0);
      }
      adj = out.adjacency;
      active = out.active;
      h = out.features;
    }
  }
}

TEST_CASE("srm layer gradients with the mask held fixed") {
  Rng rng(40);
  const KernelBank bank = KernelBank::default_bank(5);
  SrmLayerParams p{RefinementParams::init(3, 5, rng), GgnnParams::init(3, rng)};
  randomize(p.refine.scorer_se, rng);
  randomize(p.refine.scorer_sc, rng);
  randomize(p.encoder, rng);
  p.refine.w_se.value = rng.uniform_matrix(3, 1, -1, 1);
  p.refine.w_sc.value = rng.uniform_matrix(5, 1, -0.1, 0.1);
  Param hc(rng.uniform_matrix(3, 3, -1, 1));
  Matrix he_init = rng.uniform_matrix(5, 3, -1, 1);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 3; ++c) he_init(i, c) = hc.value(i % 3, c) + rng.uniform(-0.03, 0.03);
  Param he(he_init);
  const Matrix adj = random_adjacency(5, rng);
  const std::vector<bool> active(5, true);
  const Matrix wts = rng.uniform_matrix(5, 3, -1, 1);
  std::vector<std::size_t> frozen;
  {
    Tape t;
    frozen = srm_layer(t.param(hc), adj, active, t.param(he), p, bank, {}).trace.discarded;
  }
  auto f = [&](Tape& t) {
    auto out = srm_layer(t.param(hc), adj, active, t.param(he), p, bank, {}, &frozen);
    return sum(mul(out.features, t.constant(wts)));
  };
  std::vector<Param*> ps = {&hc, &he};
  p.visit("", [&](const std::string&, Param& q) { ps.push_back(&q); });
  auto r = grad_check_params(f, ps, 1e-5, 1e-4);
  CHECK_MESSAGE(r.pass, r.worst);
}
