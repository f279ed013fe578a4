#pragma once

#include "ramp/machine.hpp"
#include "ramp/rfql.hpp"
#include "ramp/runtime.hpp"
#include "ramp/time.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace ramp::testing {

inline std::string testdata(const std::string& rel) { return std::string(RAMP_TESTDATA_DIR) + "/" + rel; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "ramp") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline Timestamp t0() { return Timestamp(std::chrono::time_point_cast<Millis>(parse_iso_datetime("2012-06-01T00:00:00Z"))); }

/// A request that passes validation: starts at `start`, deadline one day later.
inline rfql::RfqRequest make_request(Money price, std::int64_t cores, std::int64_t wall = 3600,
                                     Timestamp start = t0()) {
  rfql::RfqRequest r;
  r.cpu_hour_cost = price;
  r.total_cores = cores;
  r.wall_time = wall;
  r.earliest_start = std::chrono::time_point_cast<Seconds>(start);
  r.deadline = std::chrono::time_point_cast<Seconds>(start) + Seconds(86400);
  return r;
}

/// Log job that starts at `start` (wait 0) and holds `cores` for `wall` seconds.
inline queuesim::SwfJob job(std::int64_t id, std::int64_t start, std::int64_t wall, std::int64_t cores) {
  return queuesim::make_swf_job(id, start, 0, wall, cores, wall);
}

inline queuesim::MachineModel machine(std::int64_t cores, std::vector<queuesim::SwfJob> jobs,
                                      std::int64_t offset = 0, Timestamp start = t0()) {
  queuesim::SwfLog log;
  log.jobs = std::move(jobs);
  return queuesim::MachineModel("m", cores, std::move(log), queuesim::SimClock{start, offset});
}

/// Agent that keeps every message it receives and lets tests script replies.
class ProbeAgent final : public runtime::Agent {
 public:
  using Handler = std::function<void(const protocol::AclMessage&, runtime::Context&)>;

  explicit ProbeAgent(std::string id, Handler handler = {}) : Agent(std::move(id)), handler_(std::move(handler)) {}

  void on_message(const protocol::AclMessage& msg, runtime::Context& ctx) override {
    inbox.push_back(msg);
    if (handler_) handler_(msg, ctx);
  }
  void on_undeliverable(const protocol::AclMessage& msg, runtime::Context&) override { bounced.push_back(msg); }

  std::vector<protocol::AclMessage> inbox;
  std::vector<protocol::AclMessage> bounced;

 private:
  Handler handler_;
};

}  // namespace ramp::testing
