#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace fairfare {

using Timestamp = std::chrono::sys_seconds;
using Clock = std::function<Timestamp()>;

Timestamp system_now();

// Accepts "YYYY-MM-DDTHH:MM:SSZ" and bare "YYYY-MM-DD" (midnight UTC).
// Throws bad_request on anything else.
Timestamp parse_timestamp(std::string_view text);

// Always "YYYY-MM-DDTHH:MM:SSZ".
std::string format_timestamp(Timestamp t);
std::string format_date(Timestamp t);

Timestamp make_timestamp(int year, unsigned month, unsigned day,
                         int hour = 0, int minute = 0, int second = 0);

struct IsoWeek {
  int year = 0;
  unsigned week = 0;

  std::string to_string() const;  // "2022-W05"
  friend auto operator<=>(IsoWeek const&, IsoWeek const&) = default;
};

IsoWeek iso_week(Timestamp t);

// Monday 00:00 UTC of the given ISO week.
Timestamp iso_week_start(IsoWeek week);

}  // namespace fairfare
