#include "streamrec/prequential.hpp"

#include <cmath>
#include <ostream>

#include "streamrec/errors.hpp"
#include "streamrec/inference.hpp"
#include "streamrec/rng.hpp"
#include "streamrec/streaming.hpp"
#include "streamrec/util.hpp"

namespace streamrec {

const char* const kPrequentialCsvHeader =
    "step_index,interval_start_iso8601,n_predicted,n_cold_skipped,rmse";

PrequentialResult prequential_eval(Model& model,
                                   const std::vector<RatingEvent>& events,
                                   const PrequentialOptions& opts) {
  PrequentialResult result;
  if (opts.csv) *opts.csv << kPrequentialCsvHeader << "\n";
  if (events.empty()) return result;

  // Continue the committed timeline; bucketize rejects any event that
  // overlaps it.
  const std::int64_t start = model.trained_until() == kUntrained
                                 ? events.front().timestamp - 1
                                 : model.trained_until();
  const auto batches = bucketize(events, start, opts.granularity_seconds);

  for (const StepBatch& batch : batches) {
    PrequentialStepRow row;
    row.step_index = batch.index;
    row.t_start = batch.t_start;
    double step_sq = 0.0;

    for (const RatingEvent& ev : batch.events) {
      if (!model.is_registered(ev.user_id, EntityKind::kUser) ||
          !model.is_registered(ev.item_id, EntityKind::kItem)) {
        ++row.n_cold;
        continue;
      }
      if (!opts.score) continue;
      Prediction pred = model.predict(ev.user_id, ev.item_id, ev.timestamp);
      const double err = pred.mean - ev.rating;
      step_sq += err * err;
      ++row.n_predicted;
    }

    register_new_entities(model, batch);
    update_step(model, batch, opts.iterations_per_step,
                mix_seed(opts.seed, batch.index), opts.trace);

    if (row.n_predicted > 0) {
      row.has_rmse = true;
      row.rmse = std::sqrt(step_sq / double(row.n_predicted));
      result.sum_sq_err += step_sq;
      result.n_predicted += row.n_predicted;
    }
    result.n_cold += row.n_cold;

    if (opts.csv) {
      *opts.csv << row.step_index << "," << format_iso8601(row.t_start) << ","
                << row.n_predicted << "," << row.n_cold << ","
                << (row.has_rmse ? format_double(row.rmse) : "") << "\n";
    }
    result.rows.push_back(row);
  }

  if (result.n_predicted > 0) {
    result.has_overall = true;
    result.overall_rmse =
        std::sqrt(result.sum_sq_err / double(result.n_predicted));
  }
  return result;
}

}  // namespace streamrec
