#pragma once

#include "ramp/runtime.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace ramp::runtime {

/// Virtual-time costs. Handling a message occupies the receiving agent for
/// its cost; agents process their inbox one event at a time.
struct TimingModel {
  Millis network_latency{2};
  Millis message_cost{1};
  std::map<protocol::Performative, Millis> cost_by_performative;

  Millis cost_for(const AclMessage& msg) const;
};

enum class FaultAction { kDeliver, kDrop, kBounceRefuse };

struct FaultDecision {
  FaultAction action = FaultAction::kDeliver;
  Millis extra_delay{0};
};

/// Inspected for every message at send time.
using FaultFilter = std::function<FaultDecision(const AclMessage&)>;

/// Discrete-event runtime: every agent lives in one process and one thread,
/// time is virtual, and runs are reproducible.
class SimRuntime {
 public:
  explicit SimRuntime(Timestamp start, TimingModel timing = {});
  ~SimRuntime();
  SimRuntime(const SimRuntime&) = delete;
  SimRuntime& operator=(const SimRuntime&) = delete;

  /// Adds an agent; its on_start runs at the current time. A per-agent timing
  /// model overrides handling costs for messages this agent receives.
  void add_agent(std::shared_ptr<Agent> agent, std::optional<TimingModel> timing = std::nullopt);
  Agent* find_agent(const std::string& id) const;
  template <class T>
  T* agent_as(const std::string& id) const {
    return dynamic_cast<T*>(find_agent(id));
  }

  /// Offline agents neither receive messages nor fire timers; senders get on_undeliverable.
  void set_online(const std::string& id, bool online);
  void set_fault_filter(FaultFilter filter) { fault_filter_ = std::move(filter); }
  void set_transcript(std::shared_ptr<TranscriptSink> sink) { transcript_ = std::move(sink); }
  /// Record every delivered message in the transcript (default on).
  void set_message_logging(bool on) { log_messages_ = on; }

  Timestamp now() const { return now_; }

  /// Runs `fn` inside the agent's loop, serialized with its other events.
  void invoke(const std::string& agent_id, std::function<void(Context&)> fn, Millis delay = Millis{0});

  /// Thread-safe: queue `fn` to run on the simulation thread before the next event.
  void post(std::function<void()> fn);

  /// Processes one event. Returns false when nothing is scheduled.
  bool step();
  /// Processes events up to and including time t, then sets the clock to t.
  void run_until(Timestamp t);
  /// Runs until `done()` holds or the clock passes `limit`. Returns done().
  bool run_until(const std::function<bool()>& done, Timestamp limit);
  /// Runs until the event queue is empty or the clock passes `limit`.
  void run_until_idle(Timestamp limit);
  std::optional<Timestamp> next_event_time() const;

  /// Paces virtual time against the wall clock (speed = virtual seconds per
  /// wall second) until `stop` is set. Used for live demos behind the ops API.
  void run_realtime(double speed, const std::atomic<bool>& stop);
  /// Wakes a run_realtime loop (e.g. after post()).
  void wake();

  std::uint64_t messages_delivered() const { return delivered_; }

  /// Makes step/run_until sleep so virtual time advances at `speed` virtual
  /// seconds per wall second (0 = as fast as possible).
  void set_pacing(double speed);

 private:
  class AgentContext;
  struct Event {
    enum class Kind { kDeliver, kTimer, kInvoke, kUndeliverable, kStart };
    Timestamp at;
    std::uint64_t seq;
    Kind kind;
    std::string agent;
    std::optional<AclMessage> message;
    TimerId timer = 0;
    std::string tag;
    std::function<void(Context&)> fn;
  };
  struct Later {
    bool operator()(const std::shared_ptr<Event>& a, const std::shared_ptr<Event>& b) const {
      return a->at != b->at ? a->at > b->at : a->seq > b->seq;
    }
  };
  struct Slot {
    std::shared_ptr<Agent> agent;
    std::optional<TimingModel> timing;
    Timestamp busy_until{};
    bool online = true;
    std::uint64_t next_message = 1;
  };

  void schedule(std::shared_ptr<Event> e);
  void dispatch(const std::shared_ptr<Event>& e);
  void transmit(Slot& from, AclMessage msg, Timestamp depart);
  void drain_posted();
  void pace_to(Timestamp t);

  Timestamp now_;
  TimingModel timing_;
  std::unordered_map<std::string, Slot> agents_;
  std::priority_queue<std::shared_ptr<Event>, std::vector<std::shared_ptr<Event>>, Later> queue_;
  std::uint64_t seq_ = 0;
  TimerId next_timer_ = 1;
  std::set<TimerId> cancelled_timers_;
  FaultFilter fault_filter_;
  std::shared_ptr<TranscriptSink> transcript_;
  bool log_messages_ = true;
  std::uint64_t delivered_ = 0;
  double pace_speed_ = 0;
  std::chrono::steady_clock::time_point pace_wall0_{};
  Timestamp pace_virt0_{};

  std::mutex post_mu_;
  std::condition_variable post_cv_;
  std::vector<std::function<void()>> posted_;
};

}  // namespace ramp::runtime
