#pragma once

#include <stdexcept>
#include <string>

namespace streamrec {

// Inconsistent widths, bad config values, malformed checkpoints.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement while assembling a computation.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Events or batches arriving against the direction of time.
struct TimeOrderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Prediction requested for an entity with no history. Callers may catch this
// and fall back to the global mean.
struct ColdEntityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A computation produced NaN or Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace streamrec
