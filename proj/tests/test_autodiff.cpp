#include <catch2/catch_amalgamated.hpp>

#include "hrf/autodiff.hpp"
#include "hrf/nn.hpp"
#include "hrf/optim.hpp"
#include "test_utils.hpp"

using namespace hrf;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("backward: d(x^2)/dx at x=3 is 6") {
  ad::Tape t;
  ad::Value x = t.leaf(Tensor::scalar(3.f), true);
  ad::Value y = t.square(x);
  t.backward(y);
  REQUIRE_THAT(t.grad(x)[0], WithinAbs(6.f, 1e-6f));
}

TEST_CASE("backward: bilinear product gradients") {
  ad::Tape t;
  ad::Value x = t.leaf(Tensor::scalar(2.f), true);
  ad::Value y = t.leaf(Tensor::scalar(5.f), true);
  ad::Value z = t.mul(x, y);
  t.backward(z);
  REQUIRE_THAT(t.grad(x)[0], WithinAbs(5.f, 1e-6f));
  REQUIRE_THAT(t.grad(y)[0], WithinAbs(2.f, 1e-6f));
}

TEST_CASE("backward rejects non-scalar roots") {
  ad::Tape t;
  ad::Value x = t.leaf(Tensor::zeros(2, 2), true);
  ad::Value y = t.square(x);
  REQUIRE_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("backward reports non-finite gradients with the op name") {
  ad::Tape t;
  t.check_nonfinite = true;
  ad::Value x = t.leaf(Tensor::scalar(1.f), true);
  ad::Value y = t.scale(x, 2.f);
  ad::Value z = t.custom("poison", Tensor::scalar(1.f), {y}, [y](ad::Tape& tp, const Tensor&) {
    tp.grad(y)[0] = std::numeric_limits<float>::quiet_NaN();
  });
  try {
    t.backward(z);
    FAIL("expected non-finite gradient error");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("scale") != std::string::npos);
  }
}

namespace {

// Independent double-precision replica of the Mlp forward (sum of outputs),
// reading the same float weights. Used as the finite-difference oracle.
double mlp_sum_double(const Mlp& mlp, const std::vector<Parameter*>& params,
                      const Tensor& input) {
  const MlpConfig& cfg = mlp.config();
  const int depth = cfg.depth;
  auto w = [&](int i) -> const Tensor& { return params[i]->value; };
  auto b = [&](int i) -> const Tensor& { return params[depth + 1 + i]->value; };

  double total = 0.0;
  for (int64_t row = 0; row < input.rows(); ++row) {
    std::vector<double> x(input.cols());
    for (int64_t c = 0; c < input.cols(); ++c) x[c] = input(row, c);
    std::vector<double> h = x;
    for (int i = 0; i < depth; ++i) {
      if (i == cfg.skip_layer) h.insert(h.end(), x.begin(), x.end());
      std::vector<double> z(cfg.width, 0.0);
      for (int64_t o = 0; o < cfg.width; ++o) {
        double acc = b(i)[o];
        for (size_t k = 0; k < h.size(); ++k) acc += h[k] * w(i)((int64_t)k, o);
        z[o] = acc;
      }
      for (auto& v : z) v = v / (1.0 + std::exp(-v));  // swish
      h = std::move(z);
    }
    for (int64_t o = 0; o < cfg.output_dim; ++o) {
      double acc = b(depth)[o];
      for (size_t k = 0; k < h.size(); ++k) acc += h[k] * w(depth)((int64_t)k, o);
      total += acc;
    }
  }
  return total;
}

}  // namespace

TEST_CASE("MLP gradient matches the 64-bit finite-difference oracle") {
  Rng rng(7);
  ParamStore store;
  MlpConfig cfg{3, 8, 1, 4, 2};
  Mlp mlp(cfg, "m", store, rng);

  Tensor input = Tensor::zeros(3, 4);
  for (auto& v : input.data) v = rng.uniform(-1.f, 1.f);

  ad::Tape t;
  BoundParams bp;
  ad::Value out = mlp.forward(t, bp, t.constant(input));
  ad::Value loss = t.sum_all(out);
  t.backward(loss);
  store.reset_grads();
  bp.harvest(t);

  auto params = mlp.parameters();
  for (Parameter* p : params) {
    auto fd = test::fd_gradient(*p, [&] { return mlp_sum_double(mlp, params, input); }, 1e-3);
    REQUIRE(test::grad_mismatch(p->grad, fd) < 1e-4);
  }
}

TEST_CASE("composite op chain gradients match finite differences") {
  Rng rng(11);
  ParamStore store;
  Parameter& w = store.add("w", Tensor::zeros(4, 3));
  Parameter& c = store.add("c", Tensor::zeros(2, 1));
  for (auto& v : w.value.data) v = rng.uniform(-1.f, 1.f);
  for (auto& v : c.value.data) v = rng.uniform(0.1f, 0.9f);

  Tensor x = Tensor::zeros(2, 4);
  for (auto& v : x.data) v = rng.uniform(-1.f, 1.f);
  Tensor target = Tensor::full(2, 3, 0.3f);

  auto eval = [&](ad::Tape& t, BoundParams& bp) {
    ad::Value h = t.matmul(t.constant(x), bp.get(t, w));
    ad::Value p = t.sigmoid(t.mul_colvec(t.swish(h), bp.get(t, c)));
    ad::Value l1 = t.mean_all(t.bce(p, t.constant(target)));
    ad::Value l2 = t.mean_all(t.square(t.softplus(h)));
    return t.add(l1, t.scale(l2, 0.25f));
  };

  ad::Tape t;
  BoundParams bp;
  ad::Value loss = eval(t, bp);
  t.backward(loss);
  store.reset_grads();
  bp.harvest(t);

  auto run = [&] {
    ad::Tape t2;
    BoundParams bp2;
    return (double)t2.val(eval(t2, bp2))[0];
  };
  for (Parameter* p : {&w, &c}) {
    auto fd = test::fd_gradient(*p, run, 1e-2);
    REQUIRE(test::grad_mismatch(p->grad, fd) < 1e-3);
  }
}

TEST_CASE("composite_weights matches brute-force product sums and differentiates") {
  Rng rng(3);
  ParamStore store;
  Parameter& a = store.add("a", Tensor::zeros(4, 6));
  for (auto& v : a.value.data) v = rng.uniform(0.01f, 0.95f);

  ad::Tape t;
  BoundParams bp;
  ad::Value w = t.composite_weights(bp.get(t, a));
  const Tensor& W = t.val(w);
  for (int64_t r = 0; r < 4; ++r) {
    for (int64_t c = 0; c < 6; ++c) {
      double expect = a.value(r, c);
      for (int64_t j = 0; j < c; ++j) expect *= 1.0 - a.value(r, j);
      REQUIRE_THAT(W(r, c), WithinAbs((float)expect, 1e-6f));
    }
  }

  Tensor coeff = Tensor::zeros(4, 6);
  for (auto& v : coeff.data) v = rng.uniform(-1.f, 1.f);
  ad::Value loss = t.sum_all(t.mul(w, t.constant(coeff)));
  t.backward(loss);
  store.reset_grads();
  bp.harvest(t);

  auto run = [&] {
    double total = 0.0;
    for (int64_t r = 0; r < 4; ++r) {
      double T = 1.0;
      for (int64_t c = 0; c < 6; ++c) {
        total += coeff(r, c) * a.value(r, c) * T;
        T *= 1.0 - a.value(r, c);
      }
    }
    return total;
  };
  auto fd = test::fd_gradient(a, run, 1e-4);
  REQUIRE(test::grad_mismatch(a.grad, fd) < 1e-3);
}

TEST_CASE("gather/scatter/min/norm ops differentiate correctly") {
  Rng rng(5);
  ParamStore store;
  Parameter& m = store.add("m", Tensor::zeros(3, 4));
  for (auto& v : m.value.data) v = rng.uniform(-1.f, 1.f);

  Tensor mask = Tensor::zeros(5, 4);
  for (auto& v : mask.data) v = rng.uniform() < 0.6f ? 1.f : 0.f;

  auto eval = [&](ad::Tape& t, BoundParams& bp) {
    ad::Value rows = t.gather_rows(bp.get(t, m), {0, 2, 1, 2, 0});
    ad::Value mn = t.rowwise_min_masked(rows, mask, 1.f);
    ad::Value nrm = t.rowwise_l2norm(rows);
    ad::Value sc = t.scatter_rows(t.slice_cols(rows, 0, 2), {1, 3, 5, 7, 9}, 10);
    return t.add(t.add(t.mean_all(mn), t.mean_all(nrm)), t.sum_all(t.abs_(sc)));
  };

  ad::Tape t;
  BoundParams bp;
  ad::Value loss = eval(t, bp);
  t.backward(loss);
  store.reset_grads();
  bp.harvest(t);

  auto run = [&] {
    ad::Tape t2;
    BoundParams bp2;
    return (double)t2.val(eval(t2, bp2))[0];
  };
  auto fd = test::fd_gradient(m, run, 1e-3);
  REQUIRE(test::grad_mismatch(m.grad, fd) < 1e-3);
}

TEST_CASE("bce_logits is exact in the saturated tails") {
  ad::Tape t;
  ad::Value z = t.constant(Tensor::scalar(-20.f));
  ad::Value v = t.bce_logits(z, t.constant(Tensor::scalar(1.f)));
  REQUIRE_THAT(t.val(v)[0], WithinAbs(20.f, 1e-4f));
}

TEST_CASE("swish values") {
  REQUIRE(swish(0.f) == 0.f);
  REQUIRE_THAT(swish(20.f), WithinAbs(20.f, 1e-4f));
  REQUIRE_THAT(swish(1.f), WithinAbs(0.731058f, 1e-5f));
}

TEST_CASE("positional encoding examples and dimensionality") {
  auto e0 = positional_encoding({0.f, 0.f, 0.f}, {1});
  REQUIRE(e0.size() == 9);
  for (int i = 0; i < 6; ++i) REQUIRE(e0[i] == 0.f);
  for (int i = 6; i < 9; ++i) REQUIRE(e0[i] == 1.f);

  auto id = positional_encoding({0.5f, -0.25f, 1.f}, {0});
  REQUIRE(id == std::vector<float>{0.5f, -0.25f, 1.f});

  auto e1 = positional_encoding({1.f, 0.f, 0.f}, {1});
  std::vector<float> expect{1.f, 0.f, 0.f, 0.841470985f, 0.f, 0.f, 0.540302306f, 1.f, 1.f};
  for (size_t i = 0; i < expect.size(); ++i) REQUIRE_THAT(e1[i], WithinAbs(expect[i], 1e-5f));

  for (int m = 0; m <= 6; ++m)
    REQUIRE((int)positional_encoding({0.1f, 0.2f, 0.3f}, {m}).size() == 3 + 6 * m);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamStore store;
  Parameter& p = store.add("p", Tensor::full(2, 2, 0.5f));
  Tensor before = p.value;
  Adam adam;
  for (int s = 1; s <= 5; ++s) adam.step(store, s, 1e-3f);
  REQUIRE(p.value.data == before.data);
}

TEST_CASE("adam: bias-corrected first step moves by ~lr against the gradient") {
  ParamStore store;
  Parameter& p = store.add("p", Tensor::scalar(1.f));
  p.grad[0] = 0.137f;
  Adam adam;
  adam.step(store, 1, 1e-3f);
  // m_hat/sqrt(v_hat) = sign(g) exactly on step one (up to eps)
  REQUIRE_THAT(1.f - p.value[0], WithinRel(1e-3f, 1e-3f));

  Parameter& q = store.add("q", Tensor::scalar(1.f));
  float prev = q.value[0];
  for (int s = 1; s <= 3; ++s) {
    q.grad[0] = 2.f;
    adam.update(q, s, 1e-3f);
    REQUIRE(q.value[0] < prev);
    prev = q.value[0];
  }
}

TEST_CASE("lr schedule endpoints and midpoint") {
  REQUIRE_THAT(lr_schedule(0), WithinRel(1e-3f, 1e-6f));
  REQUIRE_THAT(lr_schedule(10000), WithinRel(1e-4f, 1e-6f));
  REQUIRE_THAT(lr_schedule(5000), WithinRel(3.16228e-4f, 1e-4f));
}

TEST_CASE("identical seeds give bit-identical training arithmetic") {
  auto run = [] {
    Rng rng(42);
    ParamStore store;
    Mlp mlp(MlpConfig{2, 6, 1, 3, 1}, "m", store, rng);
    Adam adam;
    Tensor x = Tensor::zeros(4, 3);
    for (auto& v : x.data) v = rng.uniform(-1.f, 1.f);
    for (int s = 1; s <= 10; ++s) {
      ad::Tape t;
      BoundParams bp;
      ad::Value loss = t.mean_all(t.square(mlp.forward(t, bp, t.constant(x))));
      t.backward(loss);
      store.reset_grads();
      bp.harvest(t);
      adam.step(store, s, 1e-2f);
    }
    std::vector<float> out;
    for (auto& p : store.params) out.insert(out.end(), p.value.data.begin(), p.value.data.end());
    return out;
  };
  REQUIRE(run() == run());
}
