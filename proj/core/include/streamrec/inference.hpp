#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "streamrec/gaussian.hpp"
#include "streamrec/model.hpp"
#include "streamrec/streaming.hpp"

namespace streamrec {

// Per-entity record of one ELBO evaluation: inputs, the inferred
// distributions, and the noise that generated the sampled dynamic factor,
// enough to replay the step deterministically.
struct EntityStepInfo {
  std::uint32_t index = 0;
  std::string external_id;
  double dtau = 0.0;
  std::int64_t last_event_in_batch = 0;
  Tensor y;
  Tensor noise;
  DiagGaussian posterior;
  DiagGaussian prior;
  Tensor sampled_delta;
};

struct StepContext {
  std::size_t step_index = 0;
  std::vector<EntityStepInfo> users;  // sorted by dense index
  std::vector<EntityStepInfo> items;
  double elbo = 0.0;
  double likelihood = 0.0;
  double kl_user = 0.0;
  double kl_item = 0.0;
  double stationary_prior = 0.0;
};

struct ElboResult {
  double elbo = 0.0;
  GradStore grads;
  StepContext ctx;
};

// Single-sample reparameterized evaluation of the step-wise bound on one
// batch:
//   sum_events log N(x; f1(u,v), f2(u,v,sigma2)) - sum_u KL(q||p)
//   - sum_v KL(q||p) - sum_active ||u_s||^2 / (2 sigma_U^2)  (items alike)
// with u = u_s + sample(q), q = f5(h_dec, y), p = f3/f4(h_dec, dt).
// Hidden states enter as constants; gradients cover every parameter the
// evaluation touched, including stationary rows and embeddings.
ElboResult step_elbo(const Model& model, const StepBatch& batch,
                     std::uint64_t seed);

struct IterationStats {
  double elbo = 0.0;
  double likelihood = 0.0;
  double kl_user = 0.0;
  double kl_item = 0.0;
  double stationary_prior = 0.0;
};

// Runs `iterations` rounds of step_elbo + optimizer step with fresh noise
// each round, then commits the batch: hidden states advance through the
// recurrent cells, last-event clocks move to the batch, new-entity flags
// drop. With iterations = 0 the parameters stay put and only the state
// assimilation happens. Out-of-order batches are refused.
// The trace stream, when given, receives one tab-separated line per
// iteration: step, iteration, elbo, kl_u, kl_v, likelihood.
std::vector<IterationStats> update_step(Model& model, const StepBatch& batch,
                                        std::size_t iterations,
                                        std::uint64_t seed,
                                        std::ostream* trace = nullptr);

struct TrainOptions {
  std::int64_t granularity_seconds = 2 * 604800;
  std::size_t truncation_steps = 10;
  std::size_t epochs = 1;
  std::size_t batch_iterations = 1;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_elbo = 0.0;  // mean of final-iteration ELBOs across steps
  std::size_t steps = 0;
  std::size_t events = 0;
};

// Offline pass over a training period: buckets the timeline, groups steps
// into truncation segments, and replays them in order once per epoch.
// Streaming state resets at each epoch boundary (the timeline restarts);
// parameters and optimizer moments persist. Hidden states carry across
// steps as committed constants, so no gradient ever crosses a segment.
std::vector<EpochStats> train_offline(Model& model,
                                      const std::vector<RatingEvent>& events,
                                      const TrainOptions& opts,
                                      std::ostream* trace = nullptr);

// Registers every entity appearing in the batch that the model has not seen
// yet, in event order. Returns the number of new registrations.
std::size_t register_new_entities(Model& model, const StepBatch& batch);

// Resets assimilation state (hidden, clocks, flags) for every registered
// entity; parameters stay. Used at epoch boundaries.
void reset_streaming_state(Model& model);

}  // namespace streamrec
