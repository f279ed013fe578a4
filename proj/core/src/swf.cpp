#include "ramp/swf.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ramp::queuesim {

namespace {

double parse_field(std::string_view token, int line) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
    throw ParseError(fmt::format("SWF field '{}' is not numeric", token), line);
  }
  return v;
}

std::string format_field(double v) {
  if (v == std::floor(v) && std::fabs(v) < 9.0e15) return std::to_string(static_cast<std::int64_t>(v));
  return fmt::format("{}", v);
}

}  // namespace

SwfLog parse_swf(const std::string& text) {
  SwfLog log;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == ';') {
      log.comments.push_back(line.substr(first));
      continue;
    }
    SwfJob job;
    std::size_t count = 0;
    std::size_t pos = first;
    while (pos < line.size()) {
      const auto end = line.find_first_of(" \t", pos);
      const std::string_view token(line.data() + pos, (end == std::string::npos ? line.size() : end) - pos);
      if (count >= kSwfFieldCount) {
        throw ParseError(fmt::format("SWF line has more than {} fields", kSwfFieldCount), line_no);
      }
      job.fields[count++] = parse_field(token, line_no);
      if (end == std::string::npos) break;
      pos = line.find_first_not_of(" \t", end);
    }
    if (count != kSwfFieldCount) {
      throw ParseError(fmt::format("SWF line has {} fields, expected {}", count, kSwfFieldCount), line_no);
    }
    log.jobs.push_back(job);
  }
  std::stable_sort(log.jobs.begin(), log.jobs.end(),
                   [](const SwfJob& a, const SwfJob& b) { return a.fields[1] < b.fields[1]; });
  return log;
}

SwfLog load_swf_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read SWF log '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_swf(buf.str());
}

std::string serialize_swf(const SwfLog& log) {
  std::string out;
  for (const auto& c : log.comments) {
    out += c;
    out += '\n';
  }
  for (const auto& job : log.jobs) {
    for (std::size_t i = 0; i < kSwfFieldCount; ++i) {
      if (i) out += ' ';
      out += format_field(job.fields[i]);
    }
    out += '\n';
  }
  return out;
}

bool job_occupancy(const SwfJob& job, Occupancy& out) {
  std::int64_t duration = job.requested_walltime();
  if (duration <= 0) duration = job.run_time();
  std::int64_t cores = job.allocated_processors();
  if (cores <= 0) cores = job.requested_processors();
  if (duration <= 0 || cores <= 0 || job.submit_time() < 0) return false;
  out.start = job.submit_time() + std::max<std::int64_t>(job.wait_time(), 0);
  out.end = out.start + duration;
  out.cores = cores;
  return true;
}

SwfJob make_swf_job(std::int64_t id, std::int64_t submit, std::int64_t wait, std::int64_t run,
                    std::int64_t processors, std::int64_t requested_walltime) {
  SwfJob job;
  job.fields.fill(-1);
  job.fields[0] = static_cast<double>(id);
  job.fields[1] = static_cast<double>(submit);
  job.fields[2] = static_cast<double>(wait);
  job.fields[3] = static_cast<double>(run);
  job.fields[4] = static_cast<double>(processors);
  job.fields[7] = static_cast<double>(processors);
  job.fields[8] = static_cast<double>(requested_walltime);
  job.fields[10] = 1;
  return job;
}

}  // namespace ramp::queuesim
