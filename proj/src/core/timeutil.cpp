#include "fairfare/timeutil.hpp"

#include <cstdio>

#include "fairfare/error.hpp"

namespace fairfare {

using namespace std::chrono;

Timestamp system_now() {
  return time_point_cast<seconds>(system_clock::now());
}

Timestamp make_timestamp(int year, unsigned month, unsigned day, int hour,
                         int minute, int second) {
  year_month_day const ymd{std::chrono::year(year), std::chrono::month(month),
                           std::chrono::day(day)};
  if (!ymd.ok()) {
    throw Error(ErrorCode::bad_request, "invalid calendar date");
  }
  return sys_days(ymd) + hours(hour) + minutes(minute) + seconds(second);
}

Timestamp parse_timestamp(std::string_view text) {
  std::string const s(text);
  int y = 0, h = 0, mi = 0, sec = 0;
  unsigned mo = 0, d = 0;
  int consumed = 0;
  if (s.size() == 10 &&
      std::sscanf(s.c_str(), "%4d-%2u-%2u%n", &y, &mo, &d, &consumed) == 3 &&
      consumed == 10) {
    return make_timestamp(y, mo, d);
  }
  if (s.size() == 20 &&
      std::sscanf(s.c_str(), "%4d-%2u-%2uT%2d:%2d:%2dZ%n", &y, &mo, &d, &h, &mi,
                  &sec, &consumed) == 6 &&
      consumed == 20) {
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 59) {
      throw Error(ErrorCode::bad_request, "invalid time of day: " + s);
    }
    return make_timestamp(y, mo, d, h, mi, sec);
  }
  throw Error(ErrorCode::bad_request, "unparseable UTC timestamp: " + s);
}

std::string format_timestamp(Timestamp t) {
  auto const day = floor<days>(t);
  year_month_day const ymd{day};
  hh_mm_ss const tod{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()),
                static_cast<int>(tod.hours().count()),
                static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()));
  return buf;
}

std::string format_date(Timestamp t) {
  return format_timestamp(t).substr(0, 10);
}

std::string IsoWeek::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-W%02u", year, week);
  return buf;
}

namespace {

// Monday of ISO week 1: the week holding January 4th.
sys_days iso_year_start(int year) {
  sys_days const jan4 = sys_days(std::chrono::year(year) / January / 4);
  weekday const wd{jan4};
  return jan4 - (wd - Monday);
}

}  // namespace

IsoWeek iso_week(Timestamp t) {
  sys_days const day = floor<days>(t);
  // The ISO year is the calendar year of this week's Thursday.
  weekday const wd{day};
  sys_days const thursday = day - (wd - Monday) + days(3);
  int const year = static_cast<int>(year_month_day{thursday}.year());
  auto const week = (thursday - iso_year_start(year)).count() / 7 + 1;
  return IsoWeek{year, static_cast<unsigned>(week)};
}

Timestamp iso_week_start(IsoWeek week) {
  return iso_year_start(week.year) + days(7 * (week.week - 1));
}

}  // namespace fairfare
