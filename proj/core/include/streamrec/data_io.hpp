#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace streamrec {

// One observed interaction. Ids are opaque strings; dense indices are
// assigned by the model registry in order of first appearance.
struct RatingEvent {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const RatingEvent&, const RatingEvent&) = default;
};

enum class RatingsFormat { kMovielensDat, kTsv };

struct ParseStats {
  std::size_t parsed = 0;
  std::size_t malformed = 0;
};

// Reads a rating log, validates each line against [rating_min, rating_max]
// and timestamp >= 0, and returns events sorted by (timestamp, user, item).
// Malformed lines are counted; the run aborts with DataError when they
// exceed 0.1% of the file.
std::vector<RatingEvent> parse_ratings(const std::string& path,
                                       RatingsFormat format,
                                       double rating_min, double rating_max,
                                       ParseStats* stats = nullptr);

struct SplitRatios {
  double train = 4.0;
  double validation = 1.0;
  double test = 5.0;
};

enum class SplitMode { kCount, kTime };

struct ChronoSplit {
  std::vector<RatingEvent> train;
  std::vector<RatingEvent> validation;
  std::vector<RatingEvent> test;
};

// Splits a sorted event list along the timeline. kCount cuts by event count,
// kTime by wall-clock span; either way a run of equal timestamps at a cut
// stays in the earlier segment.
ChronoSplit chrono_split(const std::vector<RatingEvent>& events,
                         SplitRatios ratios, SplitMode mode = SplitMode::kCount);

// Run configuration. Loaded from flat `key = value` lines; unknown keys are
// errors, missing keys keep the defaults below. All widths/rates validated
// positive on load.
struct RunConfig {
  std::string dataset;
  std::string format = "tsv";  // tsv | movielens-dat
  double rating_min = 0.0;
  double rating_max = 10.0;
  double granularity_weeks = 2.0;
  double split_train = 4.0;
  double split_validation = 1.0;
  double split_test = 5.0;
  std::string split_mode = "count";  // count | time

  std::size_t d_s = 20;
  std::size_t d_emb = 32;
  std::size_t d_h = 20;
  std::size_t mlp_hidden = 64;

  double lambda_u_weeks = 1.0;
  double lambda_v_weeks = 4.0;
  double sigma_u = 1.0;
  double sigma_v = 1.0;

  double learning_rate = 1e-3;
  std::size_t epochs = 3;
  double truncation_weeks = 20.0;
  std::size_t train_iters = 8;
  std::size_t test_iters = 4;
  std::uint64_t seed = 42;

  int decay_sign = -1;  // -1: h e^{-dt/lambda}; +1: growing variant
  bool stop_prior_grad = false;
  bool dynamics_off = false;
  bool record_factors = false;
  bool init_mlp_zero = false;
  std::string optimizer = "adam";  // adam | sgd
  std::string eval_warmup = "validation";  // validation | none
  std::string b0 = "auto";  // auto (train mean) | numeric literal

  // Synthetic-stream generator.
  std::size_t synth_users = 200;
  std::size_t synth_items = 100;
  std::size_t synth_steps = 5;
  std::size_t synth_events = 10000;
  double synth_granularity_weeks = 1.0;
  std::size_t synth_d_s = 4;
  double synth_sigma_u = 1.0;
  double synth_drift_var = 0.02;
  double synth_env_var = 0.25;
  double synth_b0 = 3.5;
  bool synth_zero_variance = false;

  RatingsFormat format_enum() const;
  SplitMode split_mode_enum() const;
  std::int64_t granularity_seconds() const;
  double lambda_u_seconds() const;
  double lambda_v_seconds() const;
  std::size_t truncation_steps() const;

  // Applies one `key = value` assignment (the same grammar as config lines).
  void set_key(const std::string& key, const std::string& value);
  // Re-checks cross-field invariants; called after loading/overrides.
  void validate() const;
  // Serializes every key; load_config(serialize()) round-trips equal.
  std::string serialize() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig load_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

constexpr double kSecondsPerWeek = 604800.0;
constexpr double kSecondsPerDay = 86400.0;

}  // namespace streamrec
