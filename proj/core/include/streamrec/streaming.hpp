#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "streamrec/data_io.hpp"

namespace streamrec {

// All events with timestamps inside one granularity interval (t_start, t_end].
struct StepBatch {
  std::size_t index = 0;  // 1-based step number
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  std::vector<RatingEvent> events;  // sorted by (time, user, item)
  // Positions into `events`, grouped per entity. Together the groupings
  // partition the event list exactly.
  std::map<std::string, std::vector<std::size_t>> by_user;
  std::map<std::string, std::vector<std::size_t>> by_item;

  bool empty() const { return events.empty(); }
};

// Buckets sorted events into half-open-left intervals
// (start + (T-1) g, start + T g]. Steps without events are still emitted so
// idle intervals stay visible to the caller. Every event must be strictly
// after start_time.
std::vector<StepBatch> bucketize(const std::vector<RatingEvent>& events,
                                 std::int64_t start_time,
                                 std::int64_t granularity_seconds);

// Last-event wall-clock time per entity. Times only move forward.
class EntityClock {
 public:
  bool has(const std::string& entity) const { return last_.count(entity) != 0; }
  std::int64_t last_time(const std::string& entity) const;
  // Records an observation; throws TimeOrderError on regression.
  void observe(const std::string& entity, std::int64_t event_time);

  const std::map<std::string, std::int64_t>& raw() const { return last_; }

 private:
  std::map<std::string, std::int64_t> last_;
};

// Seconds since the entity's previous recorded event; 0 for a first-ever
// event. Throws TimeOrderError if event_time precedes the recorded time.
std::int64_t entity_dtau(const EntityClock& clock, const std::string& entity,
                         std::int64_t event_time);

}  // namespace streamrec
