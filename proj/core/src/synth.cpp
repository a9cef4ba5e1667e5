#include "streamrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "streamrec/errors.hpp"
#include "streamrec/gaussian.hpp"
#include "streamrec/inference.hpp"
#include "streamrec/model.hpp"
#include "streamrec/rng.hpp"
#include "streamrec/streaming.hpp"
#include "streamrec/util.hpp"

namespace streamrec {
namespace {

// Pre-activation that makes softplus(x) + floor equal the target variance.
double softplus_inv_for(double target, double floor) {
  const double excess = target - floor;
  if (excess < 1e-12) return -40.0;  // softplus(-40) ~ 4e-18
  return std::log(std::expm1(excess));
}

}  // namespace

SynthResult synth_generate(const RunConfig& cfg, std::uint64_t seed) {
  const std::size_t nu = cfg.synth_users, ni = cfg.synth_items;
  const std::size_t steps = cfg.synth_steps;
  if (nu == 0 || ni == 0 || steps == 0 || cfg.synth_events == 0)
    throw ConfigError("synth: users/items/steps/events must be positive");

  ModelDims dims;
  dims.d_s = cfg.synth_d_s;
  dims.d_h = 4;
  dims.d_emb = 4;
  dims.mlp_hidden = 8;
  ModelHyper hyper;
  hyper.sigma_u = cfg.synth_sigma_u;
  hyper.sigma_v = cfg.synth_sigma_u;
  Model gen(dims, hyper, OptimizerConfig{}, mix_seed(seed, 0x67656eULL),
            /*init_mlp_zero=*/true);

  // Bias-only networks: f1 = <u,v> + b0, rating variance = env noise,
  // drift prior = N(0, drift_var I).
  gen.set_b0(cfg.synth_b0);
  gen.params().get("f2.L2.b").data[0] = -40.0;
  gen.params().get("noise.L2.b").data[0] =
      softplus_inv_for(cfg.synth_env_var, 1e-4);
  for (const char* name : {"u.f3.L2.b", "v.f3.L2.b"}) {
    Tensor& b = gen.params().get(name);
    const double pre =
        softplus_inv_for(cfg.synth_drift_var, DiagGaussian::kVarFloor);
    for (double& v : b.data) v = pre;
  }

  for (std::size_t k = 0; k < nu; ++k)
    gen.register_entity("u" + std::to_string(k + 1), EntityKind::kUser);
  for (std::size_t k = 0; k < ni; ++k)
    gen.register_entity("i" + std::to_string(k + 1), EntityKind::kItem);

  SynthResult out;
  {
    Rng factor_rng(mix_seed(seed, 0x73746174ULL));
    Tensor& us = gen.params().get("u.stationary");
    for (std::size_t r = 0; r < nu; ++r)
      for (std::size_t c = 0; c < dims.d_s; ++c)
        us.at(r, c) = cfg.synth_sigma_u * factor_rng.gaussian();
    Tensor& vs = gen.params().get("v.stationary");
    for (std::size_t r = 0; r < ni; ++r)
      for (std::size_t c = 0; c < dims.d_s; ++c)
        vs.at(r, c) = cfg.synth_sigma_u * factor_rng.gaussian();
    for (std::size_t r = 0; r < nu; ++r)
      out.user_stationary.push_back(gen.stationary(EntityKind::kUser, r));
    for (std::size_t r = 0; r < ni; ++r)
      out.item_stationary.push_back(gen.stationary(EntityKind::kItem, r));
  }

  std::vector<Tensor> delta_u(nu, Tensor::zeros({dims.d_s}));
  std::vector<Tensor> delta_v(ni, Tensor::zeros({dims.d_s}));

  const std::int64_t g = std::max<std::int64_t>(
      2, std::llround(cfg.synth_granularity_weeks * kSecondsPerWeek));
  const std::size_t per_step = std::max<std::size_t>(1, cfg.synth_events / steps);

  for (std::size_t T = 1; T <= steps; ++T) {
    const std::int64_t t_start = kSynthStartTime + std::int64_t(T - 1) * g;
    std::size_t n_events = per_step;
    if (T == steps && cfg.synth_events > per_step * steps)
      n_events += cfg.synth_events - per_step * steps;
    if (T == 1) n_events = std::max(n_events, nu + ni);

    // 1. Schedule user/item pairs; step 1 covers every entity.
    Rng sched(mix_seed(seed, 101, T));
    std::vector<RatingEvent> evs(n_events);
    for (std::size_t k = 0; k < n_events; ++k) {
      std::size_t u, i;
      if (T == 1 && k < nu) {
        u = k;
        i = k % ni;
      } else if (T == 1 && k < nu + ni) {
        u = (k - nu) % nu;
        i = k - nu;
      } else {
        u = std::size_t(sched.next_u64() % nu);
        i = std::size_t(sched.next_u64() % ni);
      }
      evs[k].user_id = "u" + std::to_string(u + 1);
      evs[k].item_id = "i" + std::to_string(i + 1);
      evs[k].timestamp =
          t_start + 1 + std::int64_t(k) * (g - 1) / std::int64_t(n_events);
    }
    std::stable_sort(evs.begin(), evs.end(),
                     [](const RatingEvent& a, const RatingEvent& b) {
                       if (a.timestamp != b.timestamp)
                         return a.timestamp < b.timestamp;
                       if (a.user_id != b.user_id) return a.user_id < b.user_id;
                       return a.item_id < b.item_id;
                     });

    // 2. Redraw dynamic factors of active entities from the drift prior.
    Rng factor_rng(mix_seed(seed, 103, T));
    auto redraw = [&](EntityKind kind, std::vector<Tensor>& deltas,
                      const std::string& id, std::int64_t last_in_step) {
      const std::uint32_t idx = gen.index_of(id, kind);
      const EntityState& st = gen.registry(kind).state(idx);
      const double dtau = st.last_event_time == kNeverTime
                              ? 0.0
                              : double(last_in_step - st.last_event_time);
      DiagGaussian prior = gen.current_prior(kind, st, dtau);
      Tensor noise = Tensor::zeros({dims.d_s});
      for (double& v : noise.data) v = factor_rng.gaussian();
      deltas[idx] = sample_reparam(prior, noise);
    };
    std::map<std::string, std::int64_t> last_u, last_i;
    for (const RatingEvent& ev : evs) {
      last_u[ev.user_id] = ev.timestamp;
      last_i[ev.item_id] = ev.timestamp;
    }
    for (const auto& [id, t] : last_u) redraw(EntityKind::kUser, delta_u, id, t);
    for (const auto& [id, t] : last_i) redraw(EntityKind::kItem, delta_v, id, t);

    // 3. Sample ratings from the interaction network.
    Rng rating_rng(mix_seed(seed, 107, T));
    for (RatingEvent& ev : evs) {
      const std::uint32_t ui = gen.index_of(ev.user_id, EntityKind::kUser);
      const std::uint32_t vi = gen.index_of(ev.item_id, EntityKind::kItem);
      const Tensor u =
          compose_factor(gen.stationary(EntityKind::kUser, ui), delta_u[ui]);
      const Tensor v =
          compose_factor(gen.stationary(EntityKind::kItem, vi), delta_v[vi]);
      const EntityState& su = gen.registry(EntityKind::kUser).state(ui);
      const EntityState& sv = gen.registry(EntityKind::kItem).state(vi);
      const double mean = gen.interaction_mean(u, v);
      const double var =
          cfg.synth_zero_variance
              ? 1e-8
              : gen.interaction_var(u, v, gen.env_noise(su.hidden, sv.hidden));
      ev.rating = mean + std::sqrt(var) * rating_rng.gaussian();
      out.true_mean.push_back(mean);
      out.true_var.push_back(var);
      out.events.push_back(ev);
    }

    // 4. Assimilate the step so hidden states and clocks advance.
    StepBatch batch;
    batch.index = T;
    batch.t_start = t_start;
    batch.t_end = t_start + g;
    for (const RatingEvent& ev : evs) {
      batch.by_user[ev.user_id].push_back(batch.events.size());
      batch.by_item[ev.item_id].push_back(batch.events.size());
      batch.events.push_back(ev);
    }
    update_step(gen, batch, /*iterations=*/0, mix_seed(seed, 109, T));
  }
  return out;
}

void write_ratings_tsv(const std::string& path,
                       const std::vector<RatingEvent>& events) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write ratings file: " + path);
  for (const RatingEvent& ev : events)
    os << ev.user_id << "\t" << ev.item_id << "\t" << format_double(ev.rating)
       << "\t" << ev.timestamp << "\n";
  if (!os) throw DataError("write failed: " + path);
}

void write_truth_sidecar(const std::string& path, const RunConfig& cfg,
                         const SynthResult& result) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write sidecar: " + path);
  os << "# synthetic stream ground truth\n";
  os << "# b0 = " << format_double(cfg.synth_b0) << "\n";
  os << "# sigma_u = " << format_double(cfg.synth_sigma_u) << "\n";
  os << "# drift_var = " << format_double(cfg.synth_drift_var) << "\n";
  os << "# env_var = " << format_double(cfg.synth_env_var) << "\n";
  os << "# d_s = " << cfg.synth_d_s << "\n";
  for (std::size_t k = 0; k < result.events.size(); ++k) {
    const RatingEvent& ev = result.events[k];
    os << "EVENT\t" << ev.user_id << "\t" << ev.item_id << "\t" << ev.timestamp
       << "\t" << format_double(ev.rating) << "\t"
       << format_double(result.true_mean[k]) << "\t"
       << format_double(result.true_var[k]) << "\n";
  }
  auto write_factors = [&](const char* tag, const char* prefix,
                           const std::vector<Tensor>& rows) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      os << tag << "\t" << prefix << (r + 1);
      for (double v : rows[r].data) os << "\t" << format_double(v);
      os << "\n";
    }
  };
  write_factors("USER_FACTOR", "u", result.user_stationary);
  write_factors("ITEM_FACTOR", "i", result.item_stationary);
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace streamrec
