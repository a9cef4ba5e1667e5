#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "streamrec/data_io.hpp"
#include "streamrec/tensor.hpp"

namespace streamrec {

struct SynthResult {
  std::vector<RatingEvent> events;  // sorted by (time, user, item)
  std::vector<double> true_mean;    // parallel to events
  std::vector<double> true_var;
  std::vector<Tensor> user_stationary;  // ground-truth factors, dense order
  std::vector<Tensor> item_stationary;
};

// Runs the generative process forward: stationary factors ~ N(0, sigma_U^2),
// dynamic factors redrawn from the Markov drift prior whenever an entity is
// active, ratings ~ N(f1(u,v), f2(u,v,sigma2_env)) with known small networks
// (bias-configured so the drift and noise variances match the config).
// Every entity appears in step 1, so no new entities arrive later.
SynthResult synth_generate(const RunConfig& cfg, std::uint64_t seed);

void write_ratings_tsv(const std::string& path,
                       const std::vector<RatingEvent>& events);
void write_truth_sidecar(const std::string& path, const RunConfig& cfg,
                         const SynthResult& result);

// Stream start used by the generator (2020-01-01T00:00:00Z).
constexpr std::int64_t kSynthStartTime = 1577836800;

}  // namespace streamrec
