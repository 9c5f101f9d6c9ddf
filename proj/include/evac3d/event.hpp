#pragma once

#include <cstdint>

namespace evac3d {

enum class EventLabel : std::int8_t { unknown = -1, non_ace = 0, ace = 1 };

/// One asynchronous camera event. Pixel coordinates index pixel centers.
struct Event {
  int x = 0;
  int y = 0;
  double t = 0.0;  // seconds
  std::int8_t p = 1;
  EventLabel label = EventLabel::unknown;

  friend bool operator==(const Event&, const Event&) = default;
};

}  // namespace evac3d
