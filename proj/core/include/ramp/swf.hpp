#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace ramp::queuesim {

inline constexpr std::size_t kSwfFieldCount = 18;

/// One job line of a Standard Workload Format log. All 18 fields are kept
/// verbatim (as numbers) so a log can be written back unchanged.
struct SwfJob {
  std::array<double, kSwfFieldCount> fields{};

  std::int64_t job_id() const { return as_int(0); }
  std::int64_t submit_time() const { return as_int(1); }
  std::int64_t wait_time() const { return as_int(2); }
  std::int64_t run_time() const { return as_int(3); }
  std::int64_t allocated_processors() const { return as_int(4); }
  std::int64_t requested_processors() const { return as_int(7); }
  std::int64_t requested_walltime() const { return as_int(8); }
  std::int64_t status() const { return as_int(10); }

  std::int64_t as_int(std::size_t i) const { return static_cast<std::int64_t>(fields[i]); }

  bool operator==(const SwfJob&) const = default;
};

struct SwfLog {
  /// Header lines, including their leading ';'.
  std::vector<std::string> comments;
  /// Sorted by submit time (stable for equal submit times).
  std::vector<SwfJob> jobs;

  bool operator==(const SwfLog&) const = default;
};

/// Throws ParseError (with line number) on wrong arity or non-numeric fields.
SwfLog parse_swf(const std::string& text);
SwfLog load_swf_file(const std::string& path);
std::string serialize_swf(const SwfLog& log);

/// Interval a job is assumed to hold cores for, from the scheduler's point of view:
/// [submit + wait, submit + wait + requested walltime). Unknown (-1) walltime
/// falls back to run time; unknown processors fall back to the requested count.
struct Occupancy {
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::int64_t cores = 0;
};
/// Returns false when the job cannot be placed on the timeline (both
/// durations or both processor counts unknown).
bool job_occupancy(const SwfJob& job, Occupancy& out);

/// Builds a job line with the named fields set and every other field -1.
SwfJob make_swf_job(std::int64_t id, std::int64_t submit, std::int64_t wait, std::int64_t run,
                    std::int64_t processors, std::int64_t requested_walltime);

}  // namespace ramp::queuesim
