#include "ramp/machine.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>

namespace ramp::queuesim {

std::int64_t log_time(const SimClock& clock, Timestamp wall_now) {
  if (wall_now < clock.system_start) throw Error("wall clock precedes the simulation start");
  const auto elapsed = std::chrono::duration_cast<Seconds>(wall_now - clock.system_start).count();
  return elapsed + clock.log_offset;
}

Timestamp wall_time_at(const SimClock& clock, std::int64_t log_seconds) {
  return clock.system_start + Seconds(log_seconds - clock.log_offset);
}

const char* to_string(ReservationState s) {
  switch (s) {
    case ReservationState::kTentative: return "tentative";
    case ReservationState::kHeld: return "held";
    case ReservationState::kConfirmed: return "confirmed";
    case ReservationState::kCancelled: return "cancelled";
    case ReservationState::kExpired: return "expired";
  }
  return "?";
}

MachineConfig MachineConfig::from_json(const nlohmann::json& j) {
  MachineConfig c;
  c.log_path = j.at("log_path").get<std::string>();
  c.time_offset_seconds = j.value("time_offset_seconds", std::int64_t{0});
  c.total_cores = j.at("total_cores").get<std::int64_t>();
  const auto start = j.value("system_start", std::string("1970-01-01T00:00:00Z"));
  c.system_start = std::chrono::time_point_cast<Millis>(parse_iso_datetime(start));
  if (c.time_offset_seconds < 0) throw ConfigError("time_offset_seconds must be >= 0");
  if (c.total_cores <= 0) throw ConfigError("total_cores must be > 0");
  return c;
}

MachineModel::MachineModel(std::string name, std::int64_t total_cores, SwfLog log, SimClock clock)
    : name_(std::move(name)), total_cores_(total_cores), log_(std::move(log)), clock_(clock) {
  if (total_cores_ <= 0) throw ConfigError("machine must have at least one core");
  if (clock_.log_offset < 0) throw ConfigError("log offset must be >= 0");
  std::map<std::int64_t, std::int64_t> deltas;
  for (const auto& job : log_.jobs) {
    Occupancy o;
    if (!job_occupancy(job, o)) continue;
    deltas[o.start] += o.cores;
    deltas[o.end] -= o.cores;
  }
  std::int64_t level = 0;
  for (const auto& [t, d] : deltas) {
    if (d == 0) continue;
    level += d;
    step_time_.push_back(t);
    step_value_.push_back(level);
  }
}

std::int64_t MachineModel::log_occupied_at(std::int64_t t) const {
  auto it = std::upper_bound(step_time_.begin(), step_time_.end(), t);
  if (it == step_time_.begin()) return 0;
  return step_value_[static_cast<std::size_t>(it - step_time_.begin() - 1)];
}

std::vector<const ReservationRecord*> MachineModel::live_overlapping(std::int64_t a, std::int64_t b) const {
  std::vector<const ReservationRecord*> out;
  for (auto it = by_start_.lower_bound(a - max_live_duration_); it != by_start_.end() && it->first < b; ++it) {
    const auto& r = reservations_.at(it->second);
    if (r.end() > a) out.push_back(&r);
  }
  return out;
}

std::int64_t MachineModel::occupied_at(std::int64_t t) const {
  std::int64_t occ = log_occupied_at(t);
  for (const auto* r : live_overlapping(t, t + 1)) occ += r->cores;
  return occ;
}

Availability MachineModel::availability(std::int64_t at, std::int64_t cores, std::int64_t duration) const {
  if (cores < 1 || duration <= 0) throw Error("availability query needs cores >= 1 and duration > 0");
  const std::int64_t end = at + duration;
  const auto overlapping = live_overlapping(at, end);

  std::vector<std::int64_t> points{at};
  for (auto it = std::upper_bound(step_time_.begin(), step_time_.end(), at);
       it != step_time_.end() && *it < end; ++it) {
    points.push_back(*it);
  }
  for (const auto* r : overlapping) {
    if (r->start > at) points.push_back(r->start);
  }

  std::int64_t max_occ = 0;
  for (std::int64_t t : points) {
    std::int64_t occ = log_occupied_at(t);
    for (const auto* r : overlapping) {
      if (r->start <= t && t < r->end()) occ += r->cores;
    }
    max_occ = std::max(max_occ, occ);
  }

  Availability a;
  a.max_occupied = max_occ;
  a.load = Rational(std::min(max_occ, total_cores_), total_cores_);
  a.feasible = cores <= total_cores_ && max_occ + cores <= total_cores_;
  return a;
}

std::optional<std::int64_t> MachineModel::earliest_feasible_start(std::int64_t from, std::int64_t latest,
                                                                  std::int64_t cores,
                                                                  std::int64_t duration) const {
  if (from > latest || cores > total_cores_) return std::nullopt;
  // A feasible start can always be slid left until the window start or a
  // point where occupancy drops, so those are the only candidates.
  std::vector<std::int64_t> candidates{from};
  for (std::size_t i = 0; i < step_time_.size(); ++i) {
    const std::int64_t t = step_time_[i];
    if (t <= from || t > latest) continue;
    const std::int64_t before = i == 0 ? 0 : step_value_[i - 1];
    if (step_value_[i] < before) candidates.push_back(t);
  }
  for (const auto& [start, id] : by_start_) {
    const auto& r = reservations_.at(id);
    if (r.end() > from && r.end() <= latest) candidates.push_back(r.end());
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (std::int64_t t : candidates) {
    if (availability(t, cores, duration).feasible) return t;
  }
  return std::nullopt;
}

std::optional<std::string> MachineModel::reserve(std::int64_t at, std::int64_t cores, std::int64_t duration) {
  if (!availability(at, cores, duration).feasible) return std::nullopt;
  ReservationRecord r;
  r.reservation_id = fmt::format("{}-r{}", name_, next_id_++);
  r.cores = cores;
  r.start = at;
  r.duration = duration;
  r.state = ReservationState::kTentative;
  by_start_.emplace(r.start, r.reservation_id);
  max_live_duration_ = std::max(max_live_duration_, duration);
  auto id = r.reservation_id;
  reservations_.emplace(id, std::move(r));
  return id;
}

void MachineModel::hold(const std::string& id, Timestamp deadline) {
  auto it = reservations_.find(id);
  if (it == reservations_.end()) throw Error("unknown reservation " + id);
  auto& r = it->second;
  if (r.state != ReservationState::kTentative && r.state != ReservationState::kHeld) {
    throw Error(fmt::format("cannot hold reservation {} in state {}", id, to_string(r.state)));
  }
  r.state = ReservationState::kHeld;
  r.hold_deadline = deadline;
}

void MachineModel::confirm(const std::string& id) {
  auto it = reservations_.find(id);
  if (it == reservations_.end()) throw Error("unknown reservation " + id);
  auto& r = it->second;
  if (r.state != ReservationState::kTentative && r.state != ReservationState::kHeld) {
    throw Error(fmt::format("cannot confirm reservation {} in state {}", id, to_string(r.state)));
  }
  r.state = ReservationState::kConfirmed;
  r.hold_deadline.reset();
}

void MachineModel::unindex(const ReservationRecord& r) {
  auto [lo, hi] = by_start_.equal_range(r.start);
  for (auto it = lo; it != hi; ++it) {
    if (it->second == r.reservation_id) {
      by_start_.erase(it);
      break;
    }
  }
}

void MachineModel::cancel(const std::string& id) {
  auto it = reservations_.find(id);
  if (it == reservations_.end()) throw Error("unknown reservation " + id);
  auto& r = it->second;
  if (!r.occupies()) return;
  unindex(r);
  r.state = ReservationState::kCancelled;
  r.hold_deadline.reset();
}

std::vector<std::string> MachineModel::expire_holds(Timestamp now) {
  std::vector<std::string> expired;
  for (auto& [id, r] : reservations_) {
    const bool pending = r.state == ReservationState::kTentative || r.state == ReservationState::kHeld;
    if (pending && r.hold_deadline && *r.hold_deadline < now) {
      unindex(r);
      r.state = ReservationState::kExpired;
      expired.push_back(id);
    }
  }
  return expired;
}

const ReservationRecord* MachineModel::find(const std::string& id) const {
  auto it = reservations_.find(id);
  return it == reservations_.end() ? nullptr : &it->second;
}

std::vector<ReservationRecord> MachineModel::reservations() const {
  std::vector<ReservationRecord> out;
  out.reserve(reservations_.size());
  for (const auto& [id, r] : reservations_) out.push_back(r);
  return out;
}

std::unique_ptr<MachineModel> load_machine(const std::string& name, const MachineConfig& config) {
  return std::make_unique<MachineModel>(name, config.total_cores, load_swf_file(config.log_path),
                                        SimClock{config.system_start, config.time_offset_seconds});
}

PredictiveQueueAdapter::PredictiveQueueAdapter(std::unique_ptr<QueuePlugin> inner, StartPredictor predictor)
    : inner_(std::move(inner)), predictor_(std::move(predictor)) {
  if (!inner_) throw ConfigError("predictive adapter needs an inner queue");
}

Availability PredictiveQueueAdapter::availability(std::int64_t at, std::int64_t cores,
                                                  std::int64_t duration) const {
  const std::int64_t start = predictor_ ? std::max(at, predictor_(at, cores)) : at;
  return inner_->availability(start, cores, duration);
}

std::optional<std::int64_t> PredictiveQueueAdapter::earliest_feasible_start(std::int64_t from,
                                                                            std::int64_t latest,
                                                                            std::int64_t cores,
                                                                            std::int64_t duration) const {
  const std::int64_t start = predictor_ ? std::max(from, predictor_(from, cores)) : from;
  return inner_->earliest_feasible_start(start, latest, cores, duration);
}

}  // namespace ramp::queuesim
