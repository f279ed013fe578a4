#pragma once

#include "ramp/money.hpp"
#include "ramp/swf.hpp"
#include "ramp/time.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ramp::queuesim {

/// Maps the market clock onto positions in a replayed log.
struct SimClock {
  Timestamp system_start;
  std::int64_t log_offset = 0;
};

/// (wall_now - system_start) + log_offset, in whole seconds.
/// Throws Error when wall_now precedes system_start.
std::int64_t log_time(const SimClock& clock, Timestamp wall_now);
/// Inverse of log_time.
Timestamp wall_time_at(const SimClock& clock, std::int64_t log_seconds);

enum class ReservationState { kTentative, kHeld, kConfirmed, kCancelled, kExpired };
const char* to_string(ReservationState s);

struct ReservationRecord {
  std::string reservation_id;
  std::int64_t cores = 0;
  std::int64_t start = 0;  // log time, seconds
  std::int64_t duration = 0;
  ReservationState state = ReservationState::kTentative;
  std::optional<Timestamp> hold_deadline;

  std::int64_t end() const { return start + duration; }
  bool occupies() const {
    return state != ReservationState::kCancelled && state != ReservationState::kExpired;
  }
};

struct Availability {
  bool feasible = false;
  /// max occupied cores over the window / total cores, clamped to 1.
  Rational load{0};
  std::int64_t max_occupied = 0;

  double load_fraction() const {
    return static_cast<double>(load.numerator()) / static_cast<double>(load.denominator());
  }
};

/// What a resource agent needs from a queuing system. The replayed-log model
/// below is the default; other adapters (a live batch system, a wait-time
/// predictor) implement the same surface.
class QueuePlugin {
 public:
  virtual ~QueuePlugin() = default;

  virtual std::int64_t total_cores() const = 0;
  virtual const SimClock& clock() const = 0;

  /// Can `cores` cores be held over [at, at + duration)?
  virtual Availability availability(std::int64_t at, std::int64_t cores, std::int64_t duration) const = 0;
  /// First start in [from, latest] at which availability() is feasible.
  virtual std::optional<std::int64_t> earliest_feasible_start(std::int64_t from, std::int64_t latest,
                                                              std::int64_t cores,
                                                              std::int64_t duration) const = 0;
  /// Places a tentative reservation; nullopt when the slot is not free.
  virtual std::optional<std::string> reserve(std::int64_t at, std::int64_t cores, std::int64_t duration) = 0;

  virtual void hold(const std::string& id, Timestamp deadline) = 0;
  virtual void confirm(const std::string& id) = 0;
  /// Idempotent for already cancelled/expired reservations; throws for unknown ids.
  virtual void cancel(const std::string& id) = 0;
  /// Expires every tentative/held reservation whose hold deadline is before `now`.
  virtual std::vector<std::string> expire_holds(Timestamp now) = 0;
  virtual const ReservationRecord* find(const std::string& id) const = 0;
};

struct MachineConfig {
  std::string log_path;
  std::int64_t time_offset_seconds = 0;
  Timestamp system_start;
  std::int64_t total_cores = 0;

  static MachineConfig from_json(const nlohmann::json& j);
};

/// Replays an SWF log as a live queue: log jobs hold cores for their requested
/// wall time, reservations are layered on top.
class MachineModel final : public QueuePlugin {
 public:
  MachineModel(std::string name, std::int64_t total_cores, SwfLog log, SimClock clock);

  const std::string& name() const { return name_; }
  std::int64_t total_cores() const override { return total_cores_; }
  const SimClock& clock() const override { return clock_; }
  const SwfLog& log() const { return log_; }

  Availability availability(std::int64_t at, std::int64_t cores, std::int64_t duration) const override;
  std::optional<std::int64_t> earliest_feasible_start(std::int64_t from, std::int64_t latest,
                                                      std::int64_t cores,
                                                      std::int64_t duration) const override;
  std::optional<std::string> reserve(std::int64_t at, std::int64_t cores, std::int64_t duration) override;
  void hold(const std::string& id, Timestamp deadline) override;
  void confirm(const std::string& id) override;
  void cancel(const std::string& id) override;
  std::vector<std::string> expire_holds(Timestamp now) override;
  const ReservationRecord* find(const std::string& id) const override;

  /// Cores held by log jobs and live reservations at one instant.
  std::int64_t occupied_at(std::int64_t t) const;
  std::vector<ReservationRecord> reservations() const;

 private:
  std::int64_t log_occupied_at(std::int64_t t) const;
  std::vector<const ReservationRecord*> live_overlapping(std::int64_t a, std::int64_t b) const;
  void unindex(const ReservationRecord& r);

  std::string name_;
  std::int64_t total_cores_;
  SwfLog log_;
  SimClock clock_;
  /// Step function of log occupancy: value holds from time[i] until time[i+1].
  std::vector<std::int64_t> step_time_;
  std::vector<std::int64_t> step_value_;

  std::map<std::string, ReservationRecord> reservations_;
  /// Live reservations keyed by start time.
  std::multimap<std::int64_t, std::string> by_start_;
  std::int64_t max_live_duration_ = 0;
  std::uint64_t next_id_ = 1;
};

/// Build a machine from a config block (reads the SWF log from disk).
std::unique_ptr<MachineModel> load_machine(const std::string& name, const MachineConfig& config);

/// Stand-in for a queue-wait prediction service: forwards to an inner queue and
/// applies an optional start-time predictor hook. With no hook it is a pure
/// pass-through.
class PredictiveQueueAdapter final : public QueuePlugin {
 public:
  using StartPredictor = std::function<std::int64_t(std::int64_t requested_start, std::int64_t cores)>;

  PredictiveQueueAdapter(std::unique_ptr<QueuePlugin> inner, StartPredictor predictor = {});

  std::int64_t total_cores() const override { return inner_->total_cores(); }
  const SimClock& clock() const override { return inner_->clock(); }
  Availability availability(std::int64_t at, std::int64_t cores, std::int64_t duration) const override;
  std::optional<std::int64_t> earliest_feasible_start(std::int64_t from, std::int64_t latest,
                                                      std::int64_t cores,
                                                      std::int64_t duration) const override;
  std::optional<std::string> reserve(std::int64_t at, std::int64_t cores, std::int64_t duration) override {
    return inner_->reserve(at, cores, duration);
  }
  void hold(const std::string& id, Timestamp deadline) override { inner_->hold(id, deadline); }
  void confirm(const std::string& id) override { inner_->confirm(id); }
  void cancel(const std::string& id) override { inner_->cancel(id); }
  std::vector<std::string> expire_holds(Timestamp now) override { return inner_->expire_holds(now); }
  const ReservationRecord* find(const std::string& id) const override { return inner_->find(id); }

 private:
  std::unique_ptr<QueuePlugin> inner_;
  StartPredictor predictor_;
};

}  // namespace ramp::queuesim
