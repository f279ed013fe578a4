#pragma once

#include <chrono>
#include <cstdint>
#include <string>

namespace ramp {

using Millis = std::chrono::milliseconds;
using Seconds = std::chrono::seconds;
/// Instant on the market's clock (wall clock, or the simulator's virtual clock).
using Timestamp = std::chrono::sys_time<Millis>;
/// Calendar instants carried by RFQ documents; whole seconds.
using CalendarTime = std::chrono::sys_seconds;

inline std::int64_t to_epoch_ms(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_epoch_ms(std::int64_t ms) { return Timestamp(Millis(ms)); }

/// "2026-10-18" <-> days; "12:30:00Z" or "12:30:00" <-> seconds of day.
CalendarTime parse_iso_date(const std::string& text);
Seconds parse_iso_time_of_day(const std::string& text);
std::string format_iso_date(CalendarTime t);
std::string format_iso_time_of_day(CalendarTime t);
/// Full "2026-10-18T12:30:00Z" form.
CalendarTime parse_iso_datetime(const std::string& text);
std::string format_iso_datetime(CalendarTime t);

}  // namespace ramp
