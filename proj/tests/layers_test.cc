#include "streamrec/layers.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "streamrec/errors.hpp"
#include "streamrec/grad_check.hpp"
#include "support/test_util.hpp"

namespace streamrec {
namespace {

using testing::random_tensor;

TEST(Mlp, ZeroAffineIsZeroMap) {
  Mlp net("m", {LayerSpec::affine(3, 4)});
  ParamStore store;
  Rng rng(1);
  net.init_params(store, rng, /*zero_weights=*/true);
  Tensor out = net.eval(store, Tensor{1.0, 2.0, 3.0});
  ASSERT_EQ(out.size(), 4u);
  for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, TanhOfZeroIsZero) {
  Mlp net("m", {LayerSpec::activation_layer(Activation::kTanh, 2)});
  ParamStore store;
  Tensor out = net.eval(store, Tensor{0.0, 0.0});
  EXPECT_EQ(out.data[0], 0.0);
  EXPECT_EQ(out.data[1], 0.0);
}

// Independent scalar-loop evaluation of affine/tanh chains, written against
// the stated layer semantics rather than the Tape.
Tensor scalar_loop_mlp(const Mlp& net, const ParamStore& store,
                       const Tensor& input) {
  Tensor cur = input;
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const LayerSpec& l = layers[k];
    if (l.kind == LayerSpec::Kind::kAffine) {
      const Tensor& w = store.get(net.name() + ".L" + std::to_string(k) + ".W");
      const Tensor& b = store.get(net.name() + ".L" + std::to_string(k) + ".b");
      Tensor next = Tensor::zeros({l.out_width});
      for (std::size_t r = 0; r < l.out_width; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < l.in_width; ++c)
          s += w.at(r, c) * cur.data[c];
        next.data[r] = s + b.data[r];
      }
      cur = next;
    } else if (l.kind == LayerSpec::Kind::kActivation) {
      for (double& v : cur.data) v = std::tanh(v);
    } else {
      ADD_FAILURE() << "oracle only handles affine/tanh";
    }
  }
  return cur;
}

TEST(Mlp, TwoLayerMatchesScalarLoopOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Mlp net("m", {LayerSpec::affine(3, 5),
                  LayerSpec::activation_layer(Activation::kTanh, 5),
                  LayerSpec::affine(5, 2)});
    ParamStore store;
    Rng rng(seed);
    net.init_params(store, rng);
    Tensor input = random_tensor({3}, rng);
    Tensor got = net.eval(store, input);
    Tensor expect = scalar_loop_mlp(net, store, input);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_NEAR(got.data[i], expect.data[i], 1e-12);
  }
}

TEST(Mlp, WidthMismatchNamesOffendingLayer) {
  Mlp net("net", {LayerSpec::affine(3, 4)});
  ParamStore store;
  Rng rng(1);
  net.init_params(store, rng);
  try {
    net.eval(store, Tensor{1.0, 2.0});
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("net.L0"), std::string::npos);
  }
  EXPECT_THROW(Mlp("bad", {LayerSpec::affine(3, 4), LayerSpec::affine(5, 2)}),
               ConfigError);
  EXPECT_THROW(LayerSpec::activation_layer(Activation::kTanh, 0).validate("x"),
               ConfigError);
}

TEST(Mlp, AllLayerKindsComposeAndDifferentiate) {
  // affine -> tanh -> concat(aux 2) -> elementwise-product(aux 5) -> gru(aux 4)
  Mlp net("k", {LayerSpec::affine(2, 3),
                LayerSpec::activation_layer(Activation::kTanh, 3),
                LayerSpec::concat(3, 2),
                LayerSpec::elementwise_product(5),
                LayerSpec::gru_cell(4, 5)});
  ParamStore store;
  Rng rng(3);
  net.init_params(store, rng);
  Rng data_rng(17);
  const Tensor input = random_tensor({2}, data_rng);
  const Tensor aux_cat = random_tensor({2}, data_rng);
  const Tensor aux_mul = random_tensor({5}, data_rng);
  const Tensor aux_h = random_tensor({4}, data_rng);
  const Tensor weights = random_tensor({4}, data_rng);

  auto fn = [&](const ParamStore& ps, GradStore* gs) {
    Tape t;
    ParamNodes p(t, ps);
    std::vector<NodeRef> aux = {t.constant(aux_cat), t.constant(aux_mul),
                                t.constant(aux_h)};
    NodeRef out = net.apply(t, p, t.constant(input), aux);
    NodeRef obj = t.dot(out, t.constant(weights));
    if (gs) {
      t.backward(obj);
      *gs = p.harvest();
    }
    return t.value(obj).scalar();
  };
  ParamStore& ps = store;
  auto report = grad_check(fn, ps, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_param << " rel "
                                   << report.worst_rel_err;

  // Output has the gru hidden width.
  Tensor out = net.eval(store, input, std::array<Tensor, 3>{aux_cat, aux_mul, aux_h});
  EXPECT_EQ(out.size(), 4u);
}

TEST(Mlp, MlpApplyReturnsOutputAndUsableTape) {
  Mlp net("m", {LayerSpec::affine(2, 2),
                LayerSpec::activation_layer(Activation::kTanh, 2)});
  ParamStore store;
  Rng rng(5);
  net.init_params(store, rng);
  auto [out, tape] = mlp_apply(net, store, Tensor{0.3, -0.6});
  EXPECT_EQ(out.size(), 2u);
  EXPECT_GE(tape.size(), 4u);
}

TEST(Gru, ZeroParamsHalvePreviousHidden) {
  GruCell cell("g", 3, 2);
  ParamStore store;
  Rng rng(1);
  cell.init_params(store, rng);
  for (const auto& name : cell.param_names())
    for (double& v : store.get(name).data) v = 0.0;
  Tensor h{1.0, -2.0, 4.0};
  Tensor x{0.7, 0.9};
  Tensor next = gru_cell_step(cell, store, h, x);
  // z = sigmoid(0) = 0.5, candidate = tanh(0) = 0.
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(next.data[i], 0.5 * h.data[i]);

  Tensor zero_next = gru_cell_step(cell, store, Tensor{0.0, 0.0, 0.0},
                                   Tensor{0.0, 0.0});
  for (double v : zero_next.data) EXPECT_EQ(v, 0.0);
}

TEST(Gru, ChainedStepsMatchFiniteDifferences) {
  GruCell cell("g", 3, 2);
  ParamStore store;
  Rng rng(11);
  cell.init_params(store, rng);
  Rng data_rng(12);
  const Tensor h0 = random_tensor({3}, data_rng);
  const std::array<Tensor, 3> xs = {random_tensor({2}, data_rng),
                                    random_tensor({2}, data_rng),
                                    random_tensor({2}, data_rng)};
  auto fn = [&](const ParamStore& ps, GradStore* gs) {
    Tape t;
    ParamNodes p(t, ps);
    NodeRef h = t.constant(h0);
    for (const Tensor& x : xs) h = cell.step(t, p, h, t.constant(x));
    NodeRef obj = t.sum(h);
    if (gs) {
      t.backward(obj);
      *gs = p.harvest();
    }
    return t.value(obj).scalar();
  };
  auto report = grad_check(fn, store, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_param << " rel "
                                   << report.worst_rel_err;
}

TEST(Gru, UpdateGateForcedClosedKeepsHidden) {
  // Large negative update-gate bias drives z to 0, so h passes through.
  GruCell cell("g", 4, 3);
  ParamStore store;
  Rng rng(21);
  cell.init_params(store, rng);
  for (double& v : store.get("g.bz").data) v = -1e3;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng r(seed);
    Tensor h = random_tensor({4}, r);
    Tensor x = random_tensor({3}, r);
    Tensor next = gru_cell_step(cell, store, h, x);
    for (std::size_t i = 0; i < 4; ++i)
      EXPECT_NEAR(next.data[i], h.data[i], 1e-6);
  }
}

TEST(Gru, WidthMismatchIsConfigError) {
  GruCell cell("g", 3, 2);
  ParamStore store;
  Rng rng(1);
  cell.init_params(store, rng);
  EXPECT_THROW(gru_cell_step(cell, store, Tensor{1.0}, Tensor{1.0, 2.0}),
               ConfigError);
}

}  // namespace
}  // namespace streamrec
