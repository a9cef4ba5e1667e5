#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "streamrec/data_io.hpp"
#include "streamrec/model.hpp"

namespace streamrec {

struct PrequentialStepRow {
  std::size_t step_index = 0;
  std::int64_t t_start = 0;
  std::size_t n_predicted = 0;
  std::size_t n_cold = 0;
  bool has_rmse = false;
  double rmse = 0.0;
};

struct PrequentialResult {
  std::vector<PrequentialStepRow> rows;
  std::size_t n_predicted = 0;
  std::size_t n_cold = 0;
  double sum_sq_err = 0.0;
  bool has_overall = false;
  double overall_rmse = 0.0;
};

struct PrequentialOptions {
  std::int64_t granularity_seconds = 2 * 604800;
  std::size_t iterations_per_step = 4;
  std::uint64_t seed = 0;
  // When false, predictions are neither made nor scored; the stream is only
  // assimilated (used to warm the model through the validation span).
  bool score = true;
  std::ostream* csv = nullptr;    // per-step rows, with header
  std::ostream* trace = nullptr;  // per-iteration ELBO lines
};

// csv column order; rmse is empty when a step had no scorable events.
extern const char* const kPrequentialCsvHeader;

// Predict-then-update pass over a test stream. For each step, every event
// whose user and item are both already registered gets predicted and its
// squared error recorded; then the step's new entities are registered and
// the batch assimilated. Cold events are counted, never scored. Test events
// overlapping the model's committed timeline are refused.
PrequentialResult prequential_eval(Model& model,
                                   const std::vector<RatingEvent>& events,
                                   const PrequentialOptions& opts);

}  // namespace streamrec
