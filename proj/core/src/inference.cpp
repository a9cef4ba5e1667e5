#include "streamrec/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "streamrec/errors.hpp"
#include "streamrec/rng.hpp"

namespace streamrec {
namespace {

struct ActiveEntity {
  std::uint32_t index;
  std::string external_id;
  std::vector<std::size_t> event_pos;  // positions into batch.events
  double dtau = 0.0;
  std::int64_t last_event = 0;
  std::vector<std::uint32_t> counterpart_rows;
  std::vector<double> ratings;
};

// Resolves one side's groupings to dense indices, sorted by dense index so
// every downstream loop runs in a reproducible order.
std::vector<ActiveEntity> resolve_side(
    const Model& model, const StepBatch& batch, EntityKind kind,
    const std::map<std::string, std::vector<std::size_t>>& groups) {
  const EntityKind counter_kind =
      kind == EntityKind::kUser ? EntityKind::kItem : EntityKind::kUser;
  std::vector<ActiveEntity> out;
  out.reserve(groups.size());
  for (const auto& [ext_id, positions] : groups) {
    ActiveEntity a;
    a.index = model.index_of(ext_id, kind);
    a.external_id = ext_id;
    a.event_pos = positions;
    const EntityState& st = model.registry(kind).state(a.index);
    a.last_event = batch.events[positions.back()].timestamp;
    a.dtau = st.last_event_time == kNeverTime
                 ? 0.0
                 : double(a.last_event - st.last_event_time);
    if (a.dtau < 0.0)
      throw TimeOrderError("step batch precedes last event of " + ext_id);
    for (std::size_t pos : positions) {
      const RatingEvent& ev = batch.events[pos];
      const std::string& counter_id =
          kind == EntityKind::kUser ? ev.item_id : ev.user_id;
      a.counterpart_rows.push_back(model.index_of(counter_id, counter_kind));
      a.ratings.push_back(ev.rating);
    }
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(),
            [](const ActiveEntity& a, const ActiveEntity& b) {
              return a.index < b.index;
            });
  return out;
}

Tensor draw_noise(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  Tensor out = Tensor::zeros({dim});
  for (double& v : out.data) v = rng.gaussian();
  return out;
}

constexpr std::uint64_t kUserTag = 11;
constexpr std::uint64_t kItemTag = 13;

}  // namespace

ElboResult step_elbo(const Model& model, const StepBatch& batch,
                     std::uint64_t seed) {
  ElboResult result;
  result.ctx.step_index = batch.index;
  if (batch.empty()) return result;

  const ModelDims& dims = model.dims();
  const ModelHyper& hyper = model.hyper();
  const bool dyn = !hyper.dynamics_off;

  Tape tape;
  ParamNodes params(tape, model.params());

  auto users = resolve_side(model, batch, EntityKind::kUser, batch.by_user);
  auto items = resolve_side(model, batch, EntityKind::kItem, batch.by_item);

  struct SideNodes {
    std::vector<NodeRef> factor;        // composed latent factor per entity
    std::map<std::uint32_t, std::size_t> by_index;
  };

  NodeRef kl_sum_u, kl_sum_v, lik_sum, stat_sum;
  auto accumulate = [&tape](NodeRef& acc, NodeRef term) {
    acc = acc.valid() ? tape.add(acc, term) : term;
  };

  auto process_side = [&](std::vector<ActiveEntity>& side, EntityKind kind,
                          std::vector<EntityStepInfo>& infos, NodeRef& kl_sum)
      -> SideNodes {
    SideNodes nodes;
    const double sigma = kind == EntityKind::kUser ? hyper.sigma_u
                                                   : hyper.sigma_v;
    const std::uint64_t tag = kind == EntityKind::kUser ? kUserTag : kItemTag;
    for (ActiveEntity& a : side) {
      const EntityState& st = model.registry(kind).state(a.index);
      EntityStepInfo info;
      info.index = a.index;
      info.external_id = a.external_id;
      info.dtau = a.dtau;
      info.last_event_in_batch = a.last_event;

      NodeRef stationary = model.stationary_node(tape, params, kind, a.index);
      NodeRef factor = stationary;

      if (dyn) {
        NodeRef y = model.build_input_node(tape, params, kind,
                                           a.counterpart_rows, a.ratings,
                                           a.dtau, st.is_new);
        info.y = tape.value(y);
        Tensor h_dec = decay_hidden(st.hidden, a.dtau,
                                    model.decay_lambda(kind),
                                    hyper.decay_sign);
        NodeRef h = tape.constant(std::move(h_dec));

        GaussianNodes prior;
        if (st.has_committed) {
          prior = model.drift_prior_node(tape, params, h, a.dtau, kind);
          if (hyper.stop_prior_grad) {
            prior.mean = tape.stop_gradient(prior.mean);
            prior.var = tape.stop_gradient(prior.var);
          }
        } else {
          prior.mean = tape.constant(st.init_prior.mean);
          prior.var = tape.constant(st.init_prior.var);
        }
        GaussianNodes post = model.posterior_node(tape, params, h, y, kind);

        info.noise = draw_noise(dims.d_s, mix_seed(seed, tag, a.index));
        NodeRef delta = sample_reparam_node(tape, post, info.noise);
        factor = tape.add(stationary, delta);

        NodeRef kl = kl_node(tape, post, prior);
        accumulate(kl_sum, kl);

        info.posterior = DiagGaussian(tape.value(post.mean), tape.value(post.var));
        info.prior = DiagGaussian(tape.value(prior.mean), tape.value(prior.var));
        info.sampled_delta = tape.value(delta);
      }

      // log p(u_s) up to a constant: -||u_s||^2 / (2 sigma^2).
      NodeRef penalty = tape.scale(tape.dot(stationary, stationary),
                                   -1.0 / (2.0 * sigma * sigma));
      accumulate(stat_sum, penalty);

      nodes.by_index[a.index] = nodes.factor.size();
      nodes.factor.push_back(factor);
      infos.push_back(std::move(info));
    }
    return nodes;
  };

  SideNodes user_nodes =
      process_side(users, EntityKind::kUser, result.ctx.users, kl_sum_u);
  SideNodes item_nodes =
      process_side(items, EntityKind::kItem, result.ctx.items, kl_sum_v);

  for (const RatingEvent& ev : batch.events) {
    const std::uint32_t ui = model.index_of(ev.user_id, EntityKind::kUser);
    const std::uint32_t vi = model.index_of(ev.item_id, EntityKind::kItem);
    NodeRef u = user_nodes.factor[user_nodes.by_index.at(ui)];
    NodeRef v = item_nodes.factor[item_nodes.by_index.at(vi)];
    const EntityState& su = model.registry(EntityKind::kUser).state(ui);
    const EntityState& sv = model.registry(EntityKind::kItem).state(vi);

    NodeRef env = model.env_noise_node(tape, params, tape.constant(su.hidden),
                                       tape.constant(sv.hidden));
    GaussianNodes like;
    like.mean = model.interaction_mean_node(tape, params, u, v);
    like.var = model.interaction_var_node(tape, params, u, v, env);
    NodeRef ll = log_density_node(tape, like, Tensor{ev.rating});
    if (!std::isfinite(tape.value(ll).scalar()))
      throw NumericError("non-finite likelihood for event user=" + ev.user_id +
                         " item=" + ev.item_id + " t=" +
                         std::to_string(ev.timestamp));
    accumulate(lik_sum, ll);
  }

  NodeRef elbo = lik_sum;
  if (kl_sum_u.valid()) elbo = tape.sub(elbo, kl_sum_u);
  if (kl_sum_v.valid()) elbo = tape.sub(elbo, kl_sum_v);
  if (stat_sum.valid()) elbo = tape.add(elbo, stat_sum);

  result.elbo = tape.value(elbo).scalar();
  if (!std::isfinite(result.elbo))
    throw NumericError("non-finite step ELBO at step " +
                       std::to_string(batch.index));
  result.ctx.elbo = result.elbo;
  result.ctx.likelihood = tape.value(lik_sum).scalar();
  result.ctx.kl_user = kl_sum_u.valid() ? tape.value(kl_sum_u).scalar() : 0.0;
  result.ctx.kl_item = kl_sum_v.valid() ? tape.value(kl_sum_v).scalar() : 0.0;
  result.ctx.stationary_prior =
      stat_sum.valid() ? tape.value(stat_sum).scalar() : 0.0;

  tape.backward(elbo);
  result.grads = params.harvest();
  return result;
}

std::vector<IterationStats> update_step(Model& model, const StepBatch& batch,
                                        std::size_t iterations,
                                        std::uint64_t seed,
                                        std::ostream* trace) {
  if (model.trained_until() != kUntrained &&
      batch.t_start < model.trained_until())
    throw TimeOrderError("update_step: batch starting at " +
                         std::to_string(batch.t_start) +
                         " precedes committed timeline " +
                         std::to_string(model.trained_until()));

  std::vector<IterationStats> stats;
  stats.reserve(iterations);
  for (std::size_t it = 0; it < iterations; ++it) {
    ElboResult r = step_elbo(model, batch, mix_seed(seed, it));
    model.optimizer().step(model.params(), r.grads);
    IterationStats s;
    s.elbo = r.elbo;
    s.likelihood = r.ctx.likelihood;
    s.kl_user = r.ctx.kl_user;
    s.kl_item = r.ctx.kl_item;
    s.stationary_prior = r.ctx.stationary_prior;
    if (trace) {
      char line[160];
      std::snprintf(line, sizeof line, "%zu\t%zu\t%.17g\t%.17g\t%.17g\t%.17g\n",
                    batch.index, it, s.elbo, s.kl_user, s.kl_item,
                    s.likelihood);
      *trace << line;
    }
    stats.push_back(s);
  }

  // Commit: advance recurrent state using the final iteration's inputs.
  const ModelHyper& hyper = model.hyper();
  auto commit_side = [&](EntityKind kind,
                         const std::map<std::string, std::vector<std::size_t>>&
                             groups) {
    auto active = resolve_side(model, batch, kind, groups);
    for (const ActiveEntity& a : active) {
      EntityState& st = model.registry(kind).state(a.index);
      Tensor y = model.build_input(kind, a.counterpart_rows, a.ratings, a.dtau,
                                   st.is_new);
      Tensor h_dec = decay_hidden(st.hidden, a.dtau, model.decay_lambda(kind),
                                  hyper.decay_sign);
      if (hyper.record_factors) {
        DiagGaussian post = model.posterior(h_dec, y, kind);
        st.snap_location =
            compose_factor(model.stationary(kind, a.index), post.mean);
        st.snap_sigma = post.var;
        for (double& v : st.snap_sigma.data) v = std::sqrt(v);
      }
      st.hidden = model.gru_advance(kind, h_dec, y);
      if (a.last_event < st.last_event_time)
        throw TimeOrderError("commit would rewind clock of " + a.external_id);
      st.last_event_time = a.last_event;
      st.has_committed = true;
      st.is_new = false;
    }
  };
  commit_side(EntityKind::kUser, batch.by_user);
  commit_side(EntityKind::kItem, batch.by_item);

  if (hyper.record_factors) model.record_snapshot(batch.index, batch.t_start);
  model.set_trained_until(batch.t_end);
  return stats;
}

std::size_t register_new_entities(Model& model, const StepBatch& batch) {
  std::size_t added = 0;
  for (const RatingEvent& ev : batch.events) {
    if (!model.is_registered(ev.user_id, EntityKind::kUser)) {
      model.register_entity(ev.user_id, EntityKind::kUser);
      ++added;
    }
    if (!model.is_registered(ev.item_id, EntityKind::kItem)) {
      model.register_entity(ev.item_id, EntityKind::kItem);
      ++added;
    }
  }
  return added;
}

void reset_streaming_state(Model& model) {
  for (EntityKind kind : {EntityKind::kUser, EntityKind::kItem}) {
    EntityRegistry& reg = model.registry(kind);
    for (std::uint32_t i = 0; i < reg.size(); ++i) {
      EntityState& st = reg.state(i);
      st.hidden = Tensor::zeros({model.dims().d_h});
      st.init_prior = DiagGaussian::standard(model.dims().d_s);
      st.has_committed = false;
      st.last_event_time = kNeverTime;
      st.is_new = true;
      st.snap_location = Tensor();
      st.snap_sigma = Tensor();
    }
  }
  model.set_trained_until(kUntrained);
}

std::vector<EpochStats> train_offline(Model& model,
                                      const std::vector<RatingEvent>& events,
                                      const TrainOptions& opts,
                                      std::ostream* trace) {
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].timestamp < events[i - 1].timestamp)
      throw DataError("train_offline: events not sorted");
  std::vector<EpochStats> out;
  if (events.empty()) return out;

  const std::int64_t start = events.front().timestamp - 1;
  const auto batches =
      bucketize(events, start, opts.granularity_seconds);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    if (epoch > 0) reset_streaming_state(model);
    EpochStats es;
    es.epoch = epoch;
    double elbo_sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t s = 0; s < batches.size(); ++s) {
      // Segment boundaries: hidden states always carry forward as committed
      // constants, so truncation only scopes the step grouping.
      (void)opts.truncation_steps;
      const StepBatch& batch = batches[s];
      register_new_entities(model, batch);
      auto stats = update_step(model, batch, opts.batch_iterations,
                               mix_seed(opts.seed, epoch, s), trace);
      if (!stats.empty() && !batch.empty()) {
        elbo_sum += stats.back().elbo;
        ++counted;
      }
      es.events += batch.events.size();
    }
    es.steps = batches.size();
    es.mean_elbo = counted ? elbo_sum / double(counted) : 0.0;
    out.push_back(es);
  }
  return out;
}

}  // namespace streamrec
