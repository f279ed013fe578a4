#pragma once

#include "ramp/machine.hpp"

#include "ramp_test/support.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace ramp::testing {

/// Per-second timeline scan. Knows nothing about the model's step function.
struct QueueOracle {
  struct Interval {
    std::int64_t start, end, cores;
  };
  std::int64_t total = 0;
  std::vector<Interval> busy;

  void add_job(const queuesim::SwfJob& j) {
    const std::int64_t start = j.submit_time() + std::max<std::int64_t>(j.wait_time(), 0);
    // SWF marks unknown values with -1.
    const std::int64_t len = j.requested_walltime() > 0 ? j.requested_walltime() : j.run_time();
    const std::int64_t cores = j.allocated_processors() > 0 ? j.allocated_processors() : j.requested_processors();
    if (len <= 0 || cores <= 0) return;
    busy.push_back({start, start + len, cores});
  }

  std::int64_t occupied(std::int64_t t) const {
    std::int64_t occ = 0;
    for (const auto& b : busy)
      if (b.start <= t && t < b.end) occ += b.cores;
    return occ;
  }

  struct Answer {
    bool feasible;
    double load;
  };
  Answer query(std::int64_t at, std::int64_t cores, std::int64_t duration) const {
    std::int64_t peak = 0;
    for (std::int64_t t = at; t < at + duration; ++t) peak = std::max(peak, occupied(t));
    return {cores <= total && peak + cores <= total, static_cast<double>(std::min(peak, total)) / static_cast<double>(total)};
  }

  std::optional<std::int64_t> earliest(std::int64_t from, std::int64_t latest, std::int64_t cores,
                                       std::int64_t duration) const {
    for (std::int64_t t = from; t <= latest; ++t)
      if (query(t, cores, duration).feasible) return t;
    return std::nullopt;
  }
};

/// Random log of at most `max_jobs` jobs on at most `max_cores` cores.
struct QueueCase {
  std::int64_t cores;
  std::vector<queuesim::SwfJob> jobs;
};

inline QueueCase random_queue_case(std::mt19937_64& rng, int max_jobs = 200, std::int64_t max_cores = 64) {
  auto num = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  QueueCase c;
  c.cores = num(1, max_cores);
  const int n = static_cast<int>(num(0, max_jobs));
  for (int i = 0; i < n; ++i) {
    const std::int64_t run = num(1, 400);
    auto j = queuesim::make_swf_job(i + 1, num(0, 2000), num(0, 1) ? 0 : num(0, 300), run, num(1, c.cores),
                                    num(0, 4) == 0 ? -1 : run + num(0, 200));
    if (num(0, 9) == 0) j.fields[4] = -1;  // allocated unknown: falls back to requested
    c.jobs.push_back(j);
  }
  return c;
}

}  // namespace ramp::testing
