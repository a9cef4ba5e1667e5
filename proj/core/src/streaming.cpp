#include "streamrec/streaming.hpp"

#include "streamrec/errors.hpp"

namespace streamrec {

std::vector<StepBatch> bucketize(const std::vector<RatingEvent>& events,
                                 std::int64_t start_time,
                                 std::int64_t granularity_seconds) {
  if (granularity_seconds <= 0)
    throw ConfigError("bucketize: granularity must be positive");
  if (events.empty()) return {};
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].timestamp < events[i - 1].timestamp)
      throw DataError("bucketize: events not sorted by time");
  if (events.front().timestamp <= start_time)
    throw TimeOrderError("bucketize: event at " +
                         std::to_string(events.front().timestamp) +
                         " not after stream start " +
                         std::to_string(start_time));

  const std::int64_t last = events.back().timestamp;
  const std::size_t n_steps =
      std::size_t((last - start_time + granularity_seconds - 1) /
                  granularity_seconds);
  std::vector<StepBatch> out(n_steps);
  for (std::size_t s = 0; s < n_steps; ++s) {
    out[s].index = s + 1;
    out[s].t_start = start_time + std::int64_t(s) * granularity_seconds;
    out[s].t_end = out[s].t_start + granularity_seconds;
  }
  for (const RatingEvent& ev : events) {
    const std::size_t s =
        std::size_t((ev.timestamp - start_time - 1) / granularity_seconds);
    StepBatch& b = out[s];
    b.by_user[ev.user_id].push_back(b.events.size());
    b.by_item[ev.item_id].push_back(b.events.size());
    b.events.push_back(ev);
  }
  return out;
}

std::int64_t EntityClock::last_time(const std::string& entity) const {
  auto it = last_.find(entity);
  if (it == last_.end())
    throw ConfigError("entity_dtau: no record for " + entity);
  return it->second;
}

void EntityClock::observe(const std::string& entity, std::int64_t event_time) {
  auto it = last_.find(entity);
  if (it != last_.end() && event_time < it->second)
    throw TimeOrderError("entity clock regression for " + entity + ": " +
                         std::to_string(event_time) + " < " +
                         std::to_string(it->second));
  last_[entity] = event_time;
}

std::int64_t entity_dtau(const EntityClock& clock, const std::string& entity,
                         std::int64_t event_time) {
  if (!clock.has(entity)) return 0;
  const std::int64_t last = clock.last_time(entity);
  if (event_time < last)
    throw TimeOrderError("entity_dtau: time regression for " + entity);
  return event_time - last;
}

}  // namespace streamrec
