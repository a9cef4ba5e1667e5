#pragma once

#include <cstdint>
#include <string>

namespace streamrec {

// UTC ISO-8601 (e.g. 1998-04-22T13:07:12Z).
std::string format_iso8601(std::int64_t unix_seconds);

// Shortest round-trip decimal representation (%.17g).
std::string format_double(double v);

}  // namespace streamrec
