#include "ramp/sim_runtime.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>

#include <thread>

namespace ramp::runtime {

using protocol::Performative;

Millis TimingModel::cost_for(const AclMessage& msg) const {
  auto it = cost_by_performative.find(msg.performative);
  return it == cost_by_performative.end() ? message_cost : it->second;
}

class SimRuntime::AgentContext final : public Context {
 public:
  AgentContext(SimRuntime& rt, Slot& slot, Timestamp now, Timestamp depart)
      : rt_(rt), slot_(slot), now_(now), depart_(depart) {}

  Timestamp now() const override { return now_; }
  const std::string& self() const override { return slot_.agent->id(); }

  std::string send(AclMessage msg) override {
    msg.sender = self();
    msg.message_id = fmt::format("{}-{:08d}", self(), slot_.next_message++);
    const auto id = msg.message_id;
    rt_.transmit(slot_, std::move(msg), depart_);
    return id;
  }

  TimerId set_timer(Millis delay, std::string tag) override {
    auto e = std::make_shared<Event>();
    e->at = now_ + delay;
    e->kind = Event::Kind::kTimer;
    e->agent = self();
    e->timer = rt_.next_timer_++;
    e->tag = std::move(tag);
    const auto id = e->timer;
    rt_.schedule(std::move(e));
    return id;
  }

  void cancel_timer(TimerId id) override { rt_.cancelled_timers_.insert(id); }

  void record(nlohmann::json event) override {
    if (!rt_.transcript_) return;
    event["t"] = to_epoch_ms(now_);
    event["agent"] = self();
    rt_.transcript_->write(event);
  }

 private:
  SimRuntime& rt_;
  Slot& slot_;
  Timestamp now_;
  Timestamp depart_;
};

SimRuntime::SimRuntime(Timestamp start, TimingModel timing) : now_(start), timing_(std::move(timing)) {}

SimRuntime::~SimRuntime() = default;

void SimRuntime::add_agent(std::shared_ptr<Agent> agent, std::optional<TimingModel> timing) {
  if (!agent) throw Error("null agent");
  const auto id = agent->id();
  if (agents_.count(id)) throw Error("duplicate agent id '" + id + "'");
  Slot slot;
  slot.agent = std::move(agent);
  slot.timing = std::move(timing);
  slot.busy_until = now_;
  agents_.emplace(id, std::move(slot));
  auto e = std::make_shared<Event>();
  e->at = now_;
  e->kind = Event::Kind::kStart;
  e->agent = id;
  schedule(std::move(e));
}

Agent* SimRuntime::find_agent(const std::string& id) const {
  auto it = agents_.find(id);
  return it == agents_.end() ? nullptr : it->second.agent.get();
}

void SimRuntime::set_online(const std::string& id, bool online) {
  auto it = agents_.find(id);
  if (it == agents_.end()) throw Error("unknown agent '" + id + "'");
  it->second.online = online;
}

void SimRuntime::invoke(const std::string& agent_id, std::function<void(Context&)> fn, Millis delay) {
  auto e = std::make_shared<Event>();
  e->at = now_ + delay;
  e->kind = Event::Kind::kInvoke;
  e->agent = agent_id;
  e->fn = std::move(fn);
  schedule(std::move(e));
}

void SimRuntime::post(std::function<void()> fn) {
  {
    std::lock_guard lock(post_mu_);
    posted_.push_back(std::move(fn));
  }
  post_cv_.notify_all();
}

void SimRuntime::wake() { post_cv_.notify_all(); }

void SimRuntime::drain_posted() {
  std::vector<std::function<void()>> work;
  {
    std::lock_guard lock(post_mu_);
    work.swap(posted_);
  }
  for (auto& fn : work) fn();
}

void SimRuntime::schedule(std::shared_ptr<Event> e) {
  e->seq = ++seq_;
  queue_.push(std::move(e));
}

std::optional<Timestamp> SimRuntime::next_event_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top()->at;
}

void SimRuntime::transmit(Slot& from, AclMessage msg, Timestamp depart) {
  msg.sent_at = depart;
  const Slot* from_slot = &from;
  const auto& timing = timing_;
  FaultDecision decision;
  if (fault_filter_) decision = fault_filter_(msg);

  if (decision.action == FaultAction::kDrop) {
    if (transcript_) {
      transcript_->write({{"t", to_epoch_ms(depart)},
                          {"agent", from_slot->agent->id()},
                          {"kind", "dropped"},
                          {"message", protocol::message_to_json(msg)}});
    }
    return;
  }

  const Timestamp arrival = depart + timing.network_latency + decision.extra_delay;
  if (decision.action == FaultAction::kBounceRefuse) {
    auto refusal = reply_to(msg, Performative::kRefuse, protocol::ReasonContent{"injected refusal", ""});
    refusal.sender = msg.receiver;
    refusal.message_id = fmt::format("{}-x{:08d}", msg.receiver, ++seq_);
    refusal.sent_at = arrival;
    auto e = std::make_shared<Event>();
    e->at = arrival + timing.network_latency;
    e->kind = Event::Kind::kDeliver;
    e->agent = msg.sender;
    e->message = std::move(refusal);
    schedule(std::move(e));
    return;
  }

  auto e = std::make_shared<Event>();
  e->at = arrival;
  e->agent = msg.receiver;
  if (!agents_.count(msg.receiver)) {
    e->kind = Event::Kind::kUndeliverable;
    e->agent = msg.sender;
  } else {
    e->kind = Event::Kind::kDeliver;
  }
  e->message = std::move(msg);
  schedule(std::move(e));
}

void SimRuntime::dispatch(const std::shared_ptr<Event>& e) {
  auto it = agents_.find(e->agent);
  if (it == agents_.end()) return;
  Slot& slot = it->second;

  if (!slot.online) {
    if (e->kind == Event::Kind::kDeliver && e->message) {
      auto back = std::make_shared<Event>();
      back->at = e->at + timing_.network_latency;
      back->kind = Event::Kind::kUndeliverable;
      back->agent = e->message->sender;
      back->message = e->message;
      schedule(std::move(back));
    }
    return;
  }
  if (e->kind == Event::Kind::kTimer && cancelled_timers_.erase(e->timer)) return;

  if (slot.busy_until > e->at) {
    e->at = slot.busy_until;
    schedule(e);
    return;
  }

  Millis cost{0};
  if (e->kind == Event::Kind::kDeliver) {
    cost = (slot.timing ? *slot.timing : timing_).cost_for(*e->message);
  }
  const Timestamp start = e->at;
  slot.busy_until = start + cost;
  AgentContext ctx(*this, slot, start, start + cost);

  switch (e->kind) {
    case Event::Kind::kStart:
      slot.agent->on_start(ctx);
      break;
    case Event::Kind::kDeliver:
      ++delivered_;
      if (log_messages_ && transcript_) {
        transcript_->write({{"t", to_epoch_ms(start)},
                            {"agent", slot.agent->id()},
                            {"kind", "message"},
                            {"message", protocol::message_to_json(*e->message)}});
      }
      slot.agent->on_message(*e->message, ctx);
      break;
    case Event::Kind::kTimer:
      slot.agent->on_timer(e->timer, e->tag, ctx);
      break;
    case Event::Kind::kInvoke:
      e->fn(ctx);
      break;
    case Event::Kind::kUndeliverable:
      slot.agent->on_undeliverable(*e->message, ctx);
      break;
  }
}

void SimRuntime::set_pacing(double speed) {
  pace_speed_ = speed;
  pace_wall0_ = std::chrono::steady_clock::now();
  pace_virt0_ = now_;
}

void SimRuntime::pace_to(Timestamp t) {
  if (pace_speed_ <= 0 || t <= now_) return;
  const auto ahead = std::chrono::duration<double>(t - pace_virt0_).count() / pace_speed_;
  std::this_thread::sleep_until(pace_wall0_ +
                                std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(ahead)));
}

bool SimRuntime::step() {
  drain_posted();
  if (queue_.empty()) return false;
  auto e = queue_.top();
  queue_.pop();
  pace_to(e->at);
  if (e->at > now_) now_ = e->at;
  dispatch(e);
  return true;
}

void SimRuntime::run_until(Timestamp t) {
  drain_posted();
  while (!queue_.empty() && queue_.top()->at <= t) step();
  pace_to(t);
  if (t > now_) now_ = t;
}

bool SimRuntime::run_until(const std::function<bool()>& done, Timestamp limit) {
  while (!done()) {
    drain_posted();
    if (queue_.empty() || queue_.top()->at > limit) {
      if (limit > now_) now_ = limit;
      return done();
    }
    step();
  }
  return true;
}

void SimRuntime::run_until_idle(Timestamp limit) {
  while (!queue_.empty() && queue_.top()->at <= limit) step();
  drain_posted();
}

void SimRuntime::run_realtime(double speed, const std::atomic<bool>& stop) {
  using Clock = std::chrono::steady_clock;
  const auto wall0 = Clock::now();
  const Timestamp virt0 = now_;
  auto virtual_now = [&] {
    const auto elapsed = std::chrono::duration<double>(Clock::now() - wall0).count() * speed;
    return virt0 + std::chrono::duration_cast<Millis>(std::chrono::duration<double>(elapsed));
  };
  while (!stop.load()) {
    drain_posted();
    run_until(virtual_now());
    std::unique_lock lock(post_mu_);
    if (!posted_.empty()) continue;
    auto deadline = Clock::now() + std::chrono::milliseconds(50);
    if (auto next = next_event_time()) {
      const auto ahead = std::chrono::duration<double>(*next - now_).count() / speed;
      const auto at = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(ahead));
      if (at < deadline) deadline = at;
    }
    post_cv_.wait_until(lock, deadline);
  }
}

}  // namespace ramp::runtime
