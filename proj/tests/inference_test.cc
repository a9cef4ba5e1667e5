#include "streamrec/inference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "streamrec/errors.hpp"
#include "streamrec/grad_check.hpp"
#include "streamrec/streaming.hpp"
#include "support/test_util.hpp"

namespace streamrec {
namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.d_s = 2;
  d.d_h = 2;
  d.d_emb = 3;
  d.mlp_hidden = 4;
  return d;
}

RatingEvent ev(const std::string& u, const std::string& i, double r,
               std::int64_t t) {
  return RatingEvent{u, i, r, t};
}

std::vector<StepBatch> toy_batches() {
  std::vector<RatingEvent> events = {
      ev("a", "x", 4.0, 100), ev("a", "y", 2.0, 150), ev("b", "x", 5.0, 180)};
  return bucketize(events, 0, 200);
}

Model toy_model(bool dynamics_off = false, bool stop_prior = false) {
  ModelHyper hyper;
  hyper.dynamics_off = dynamics_off;
  hyper.stop_prior_grad = stop_prior;
  Model m(tiny_dims(), hyper, OptimizerConfig{}, 42);
  m.register_entity("a", EntityKind::kUser);
  m.register_entity("b", EntityKind::kUser);
  m.register_entity("x", EntityKind::kItem);
  m.register_entity("y", EntityKind::kItem);
  return m;
}

TEST(StepElbo, EmptyBatchIsZeroWithNoGradients) {
  Model m = toy_model();
  StepBatch batch;
  batch.index = 1;
  batch.t_start = 0;
  batch.t_end = 100;
  auto before = m.checkpoint_bytes();
  ElboResult r = step_elbo(m, batch, 1);
  EXPECT_EQ(r.elbo, 0.0);
  EXPECT_TRUE(r.grads.grads.empty());
  EXPECT_EQ(m.checkpoint_bytes(), before);
}

TEST(StepElbo, KlTermsNonNegativePerEntity) {
  Model m = toy_model();
  ElboResult r = step_elbo(m, toy_batches()[0], 5);
  ASSERT_EQ(r.ctx.users.size(), 2u);
  ASSERT_EQ(r.ctx.items.size(), 2u);
  double kl_sum_u = 0.0;
  for (const auto& info : r.ctx.users) {
    const double kl = kl_divergence(info.posterior, info.prior);
    EXPECT_GE(kl, -1e-12);
    kl_sum_u += kl;
  }
  EXPECT_NEAR(kl_sum_u, r.ctx.kl_user, 1e-9);
  EXPECT_GE(r.ctx.kl_item, -1e-12);
  // elbo = likelihood - KLs + stationary penalty
  EXPECT_NEAR(r.elbo,
              r.ctx.likelihood - r.ctx.kl_user - r.ctx.kl_item +
                  r.ctx.stationary_prior,
              1e-9);
}

TEST(StepElbo, UnregisteredEntityIsError) {
  Model m = toy_model();
  std::vector<RatingEvent> events = {ev("ghost", "x", 3.0, 50)};
  auto batches = bucketize(events, 0, 100);
  EXPECT_THROW(step_elbo(m, batches[0], 1), ConfigError);
}

TEST(StepElbo, GradientsMatchFiniteDifferences) {
  Model m = toy_model();
  const StepBatch batch = toy_batches()[0];
  auto fn = [&](const ParamStore&, GradStore* gs) {
    ElboResult r = step_elbo(m, batch, 99);
    if (gs) *gs = r.grads;
    return r.elbo;
  };
  auto report = grad_check(fn, m.params(), 1e-5, 1e-4);
  EXPECT_TRUE(report.passed(1e-4))
      << report.worst_param << " rel " << report.worst_rel_err;
}

TEST(StepElbo, StopPriorGradCutsDriftNetworkGradients) {
  // Warm the states so the prior really comes from the drift networks.
  Model m = toy_model(false, true);
  auto batches = toy_batches();
  update_step(m, batches[0], 1, 7);
  std::vector<RatingEvent> later = {ev("a", "x", 3.0, 250),
                                    ev("b", "y", 4.0, 300)};
  auto batch2 = bucketize(later, 200, 200)[0];
  batch2.index = 2;
  ElboResult r = step_elbo(m, batch2, 8);
  for (const auto& [name, g] : r.grads.grads) {
    if (name.find(".f3.") != std::string::npos ||
        name.find(".f4.") != std::string::npos) {
      for (double v : g.data) EXPECT_EQ(v, 0.0) << name;
    }
  }

  Model m2 = toy_model(false, false);
  update_step(m2, batches[0], 1, 7);
  ElboResult r2 = step_elbo(m2, batch2, 8);
  double f3_norm = 0.0;
  for (const auto& [name, g] : r2.grads.grads)
    if (name.find(".f3.") != std::string::npos)
      for (double v : g.data) f3_norm += std::abs(v);
  EXPECT_GT(f3_norm, 0.0);
}

TEST(StepElbo, MeanFieldPosteriorIgnoresOtherChainState) {
  Model m = toy_model();
  const StepBatch batch = toy_batches()[0];
  ElboResult r1 = step_elbo(m, batch, 5);
  // Perturb an item hidden state; user posteriors must be unchanged.
  m.registry(EntityKind::kItem).state(0).hidden = Tensor{9.0, -9.0};
  ElboResult r2 = step_elbo(m, batch, 5);
  for (std::size_t k = 0; k < r1.ctx.users.size(); ++k) {
    EXPECT_TRUE(bit_equal(r1.ctx.users[k].posterior.mean,
                          r2.ctx.users[k].posterior.mean));
    EXPECT_TRUE(bit_equal(r1.ctx.users[k].posterior.var,
                          r2.ctx.users[k].posterior.var));
  }
}

TEST(UpdateStep, ZeroIterationsAssimilateWithoutTouchingParameters) {
  Model m = toy_model();
  const auto params_before = m.checkpoint_bytes();
  auto batches = toy_batches();
  auto stats = update_step(m, batches[0], 0, 3);
  EXPECT_TRUE(stats.empty());

  const EntityState& sa =
      m.registry(EntityKind::kUser).state(m.index_of("a", EntityKind::kUser));
  EXPECT_TRUE(sa.has_committed);
  EXPECT_FALSE(sa.is_new);
  EXPECT_EQ(sa.last_event_time, 150);
  double hnorm = 0.0;
  for (double v : sa.hidden.data) hnorm += std::abs(v);
  EXPECT_GT(hnorm, 0.0);

  // Parameters identical except bookkeeping outside the ParamStore.
  Model fresh = toy_model();
  for (const auto& [name, t] : fresh.params())
    EXPECT_TRUE(bit_equal(t, m.params().get(name))) << name;
  (void)params_before;
}

TEST(UpdateStep, ElboTraceMostlyImproves) {
  OptimizerConfig oc;
  oc.learning_rate = 1e-3;
  ModelHyper hyper;
  Model m(tiny_dims(), hyper, oc, 1234);
  m.register_entity("a", EntityKind::kUser);
  m.register_entity("b", EntityKind::kUser);
  m.register_entity("x", EntityKind::kItem);
  m.register_entity("y", EntityKind::kItem);
  auto stats = update_step(m, toy_batches()[0], 50, 77);
  ASSERT_EQ(stats.size(), 50u);
  std::size_t improved = 0;
  for (std::size_t i = 1; i < stats.size(); ++i)
    if (stats[i].elbo >= stats[i - 1].elbo) ++improved;
  EXPECT_GE(double(improved) / double(stats.size() - 1), 0.8);
}

TEST(UpdateStep, ReplayFromCheckpointIsBitIdentical) {
  Model m = toy_model();
  auto batches = toy_batches();
  update_step(m, batches[0], 3, 11);
  const std::string ckpt = m.checkpoint_bytes();

  std::vector<RatingEvent> later = {ev("a", "y", 1.0, 260)};
  auto batch2 = bucketize(later, 200, 200)[0];

  std::istringstream s1(ckpt, std::ios::binary);
  Model r1 = Model::deserialize(s1);
  update_step(r1, batch2, 4, 555);

  std::istringstream s2(ckpt, std::ios::binary);
  Model r2 = Model::deserialize(s2);
  update_step(r2, batch2, 4, 555);

  EXPECT_EQ(r1.checkpoint_bytes(), r2.checkpoint_bytes());
}

TEST(UpdateStep, OutOfOrderBatchRefused) {
  Model m = toy_model();
  auto batches = toy_batches();
  update_step(m, batches[0], 1, 5);
  EXPECT_THROW(update_step(m, batches[0], 1, 5), TimeOrderError);
}

TEST(UpdateStep, IdleEntitiesBitwiseUnchanged) {
  Model m = toy_model();
  // Commit everyone once so idle states carry real values.
  update_step(m, toy_batches()[0], 2, 19);

  const std::uint32_t idle_user = m.index_of("b", EntityKind::kUser);
  const std::uint32_t idle_item = m.index_of("y", EntityKind::kItem);
  const EntityState before_u = m.registry(EntityKind::kUser).state(idle_user);
  const EntityState before_i = m.registry(EntityKind::kItem).state(idle_item);
  Tensor stat_before = m.stationary(EntityKind::kUser, idle_user);
  Tensor embed_before_row = Tensor::zeros({3});
  for (std::size_t c = 0; c < 3; ++c)
    embed_before_row.data[c] = m.params().get("v.embed").at(idle_user, c);

  // Next step involves only user a / item x.
  std::vector<RatingEvent> later = {ev("a", "x", 2.0, 250)};
  auto batch2 = bucketize(later, 200, 200)[0];
  update_step(m, batch2, 5, 23);

  const EntityState& after_u = m.registry(EntityKind::kUser).state(idle_user);
  const EntityState& after_i = m.registry(EntityKind::kItem).state(idle_item);
  EXPECT_TRUE(bit_equal(before_u.hidden, after_u.hidden));
  EXPECT_EQ(before_u.last_event_time, after_u.last_event_time);
  EXPECT_EQ(before_u.is_new, after_u.is_new);
  EXPECT_TRUE(bit_equal(before_i.hidden, after_i.hidden));
  EXPECT_TRUE(bit_equal(stat_before, m.stationary(EntityKind::kUser, idle_user)));
  for (std::size_t c = 0; c < 3; ++c)
    EXPECT_EQ(embed_before_row.data[c],
              m.params().get("v.embed").at(idle_user, c));
}

TEST(UpdateStep, TraceLineFormat) {
  Model m = toy_model();
  std::ostringstream trace;
  update_step(m, toy_batches()[0], 2, 5, &trace);
  std::istringstream lines(trace.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    ++count;
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 5);
  }
  EXPECT_EQ(count, 2u);
}

TEST(TrainOffline, SingleStepEquivalentToUpdateStep) {
  std::vector<RatingEvent> events = {ev("a", "x", 4.0, 100),
                                     ev("b", "y", 2.0, 150)};
  TrainOptions opts;
  opts.granularity_seconds = 200;
  opts.truncation_steps = 1;
  opts.epochs = 1;
  opts.batch_iterations = 3;
  opts.seed = 7;

  Model m1(tiny_dims(), ModelHyper{}, OptimizerConfig{}, 42);
  train_offline(m1, events, opts);

  Model m2(tiny_dims(), ModelHyper{}, OptimizerConfig{}, 42);
  auto batches = bucketize(events, 99, 200);
  register_new_entities(m2, batches[0]);
  update_step(m2, batches[0], 3, mix_seed(mix_seed(7, 0), 0));

  EXPECT_EQ(m1.checkpoint_bytes(), m2.checkpoint_bytes());
}

TEST(TrainOffline, UnsortedEventsRejected) {
  std::vector<RatingEvent> events = {ev("a", "x", 4.0, 200),
                                     ev("b", "y", 2.0, 100)};
  Model m(tiny_dims(), ModelHyper{}, OptimizerConfig{}, 1);
  EXPECT_THROW(train_offline(m, events, TrainOptions{}), DataError);
}

TEST(TrainOffline, EpochsReplayTheSameTimeline) {
  std::vector<RatingEvent> events;
  Rng rng(8);
  for (int i = 0; i < 40; ++i)
    events.push_back(ev("u" + std::to_string(rng.next_u64() % 5),
                        "i" + std::to_string(rng.next_u64() % 4),
                        double(rng.next_u64() % 5) + 1.0, 100 + i * 37));
  TrainOptions opts;
  opts.granularity_seconds = 400;
  opts.epochs = 3;
  opts.batch_iterations = 2;
  Model m(tiny_dims(), ModelHyper{}, OptimizerConfig{}, 5);
  auto stats = train_offline(m, events, opts);
  ASSERT_EQ(stats.size(), 3u);
  // Every epoch sees the same data.
  EXPECT_EQ(stats[0].events, stats[1].events);
  EXPECT_EQ(stats[1].events, stats[2].events);
  EXPECT_EQ(stats[0].steps, stats[2].steps);
}

}  // namespace
}  // namespace streamrec
