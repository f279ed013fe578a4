#include "ramp/time.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>

#include <cstdio>

namespace ramp {

namespace {

int parse_fixed(const std::string& text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) throw ParseError("truncated date/time '" + text + "'");
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (text[i] < '0' || text[i] > '9') throw ParseError("invalid date/time '" + text + "'");
    v = v * 10 + (text[i] - '0');
  }
  return v;
}

}  // namespace

CalendarTime parse_iso_date(const std::string& text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw ParseError("expected YYYY-MM-DD, got '" + text + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year(parse_fixed(text, 0, 4)), month(parse_fixed(text, 5, 2)),
                           day(parse_fixed(text, 8, 2))};
  if (!ymd.ok()) throw ParseError("invalid calendar date '" + text + "'");
  return CalendarTime(sys_days(ymd).time_since_epoch());
}

Seconds parse_iso_time_of_day(const std::string& text) {
  std::string t = text;
  if (!t.empty() && t.back() == 'Z') t.pop_back();
  if (t.size() == 5) t += ":00";
  if (t.size() != 8 || t[2] != ':' || t[5] != ':') {
    throw ParseError("expected hh:mm:ssZ, got '" + text + "'");
  }
  const int h = parse_fixed(t, 0, 2);
  const int m = parse_fixed(t, 3, 2);
  const int s = parse_fixed(t, 6, 2);
  if (h > 23 || m > 59 || s > 59) throw ParseError("invalid time of day '" + text + "'");
  return Seconds(h * 3600 + m * 60 + s);
}

std::string format_iso_date(CalendarTime t) {
  using namespace std::chrono;
  const year_month_day ymd{floor<days>(t)};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

std::string format_iso_time_of_day(CalendarTime t) {
  using namespace std::chrono;
  const auto secs = (t - floor<days>(t)).count();
  return fmt::format("{:02d}:{:02d}:{:02d}Z", secs / 3600, (secs / 60) % 60, secs % 60);
}

CalendarTime parse_iso_datetime(const std::string& text) {
  const auto t = text.find('T');
  if (t == std::string::npos) throw ParseError("expected YYYY-MM-DDThh:mm:ssZ, got '" + text + "'");
  return parse_iso_date(text.substr(0, t)) + parse_iso_time_of_day(text.substr(t + 1));
}

std::string format_iso_datetime(CalendarTime t) {
  return format_iso_date(t) + "T" + format_iso_time_of_day(t);
}

}  // namespace ramp
