#include "streamrec/optimizer.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "streamrec/tensor.hpp"

namespace streamrec {
namespace {

TEST(Optimizer, PlainDescentStep) {
  OptimizerConfig cfg;
  cfg.mode = OptimizerMode::kSgd;
  cfg.learning_rate = 0.1;
  Optimizer opt(cfg);
  ParamStore store;
  store.create("p", Tensor{1.0});
  GradStore grads;
  grads.grads["p"] = Tensor{2.0};
  opt.step(store, grads);
  EXPECT_DOUBLE_EQ(store.get("p").scalar(), 0.8);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Optimizer, ZeroGradientLeavesParametersAndCounts) {
  Optimizer opt(OptimizerConfig{});
  ParamStore store;
  store.create("p", Tensor{1.5, -0.5});
  GradStore grads;
  grads.grads["p"] = Tensor{0.0, 0.0};
  opt.step(store, grads);
  EXPECT_EQ(store.get("p").data[0], 1.5);
  EXPECT_EQ(store.get("p").data[1], -0.5);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Optimizer, AdamFirstStepIsSignedLearningRate) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.01;
  Optimizer opt(cfg);
  ParamStore store;
  store.create("p", Tensor{0.0, 0.0});
  GradStore grads;
  grads.grads["p"] = Tensor{0.3, -4.0};
  opt.step(store, grads);
  // Bias-corrected first step is -lr * g / (|g| + eps) ~ -lr * sign(g).
  EXPECT_NEAR(store.get("p").data[0], -0.01, 1e-6);
  EXPECT_NEAR(store.get("p").data[1], 0.01, 1e-6);
}

TEST(Optimizer, NonFiniteGradientSkipsAndWarns) {
  Optimizer opt(OptimizerConfig{});
  ParamStore store;
  store.create("p", Tensor{1.0});
  store.create("q", Tensor{2.0});
  GradStore grads;
  grads.grads["p"] = Tensor{std::nan("")};
  grads.grads["q"] = Tensor{1.0};
  opt.step(store, grads);
  EXPECT_EQ(store.get("p").scalar(), 1.0);
  EXPECT_NE(store.get("q").scalar(), 2.0);
  EXPECT_EQ(opt.nonfinite_skips(), 1u);
}

TEST(Optimizer, RowSparseUpdateLeavesUntouchedRowsBitIdentical) {
  Optimizer opt(OptimizerConfig{});
  ParamStore store;
  Tensor table = Tensor::zeros({4, 3});
  for (std::size_t i = 0; i < table.size(); ++i)
    table.data[i] = double(i) * 0.25 + 0.1;
  store.create("t", table);

  GradStore grads;
  Tensor g = Tensor::zeros({4, 3});
  for (std::size_t c = 0; c < 3; ++c) g.at(1, c) = 1.0;
  grads.grads["t"] = g;
  grads.touched_rows["t"] = {1};
  opt.step(store, grads);

  const Tensor& after = store.get("t");
  for (std::size_t r : {0u, 2u, 3u})
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_EQ(after.at(r, c), table.at(r, c)) << r << "," << c;
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NE(after.at(1, c), table.at(1, c));
}

TEST(Optimizer, MomentsGrowWithTableCapacity) {
  Optimizer opt(OptimizerConfig{});
  ParamStore store;
  store.create("t", Tensor::full({2, 2}, 1.0));
  GradStore g1;
  g1.grads["t"] = Tensor::full({2, 2}, 0.5);
  g1.touched_rows["t"] = {0, 1};
  opt.step(store, g1);

  // Table gains rows (entity growth); moments must follow.
  Tensor grown = Tensor::zeros({4, 2});
  const Tensor& cur = store.get("t");
  std::copy(cur.data.begin(), cur.data.end(), grown.data.begin());
  store.get("t") = grown;

  GradStore g2;
  g2.grads["t"] = Tensor::zeros({4, 2});
  g2.grads["t"].at(3, 0) = 1.0;
  g2.touched_rows["t"] = {3};
  EXPECT_NO_THROW(opt.step(store, g2));
  EXPECT_NE(store.get("t").at(3, 0), 0.0);
}

}  // namespace
}  // namespace streamrec
