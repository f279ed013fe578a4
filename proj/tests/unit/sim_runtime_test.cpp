#include "ramp/sim_runtime.hpp"

#include "ramp_test/support.hpp"

#include <gtest/gtest.h>

namespace ramp::runtime {
namespace {

using protocol::Performative;
using testing::ProbeAgent;
using testing::t0;

AclMessage note(const std::string& to, const std::string& text) {
  return make_message(Performative::kRefuse, to, "c", protocol::ReasonContent{text, ""});
}

std::string text(const AclMessage& m) { return std::get<protocol::ReasonContent>(m.content).reason; }

class Ticker final : public Agent {
 public:
  Ticker() : Agent("ticker") {}
  void on_start(Context& ctx) override {
    ctx.set_timer(Millis{100}, "a");
    const auto drop = ctx.set_timer(Millis{150}, "dropped");
    ctx.set_timer(Millis{200}, "b");
    ctx.cancel_timer(drop);
  }
  void on_message(const AclMessage&, Context&) override {}
  void on_timer(TimerId, const std::string& tag, Context& ctx) override { fired.emplace_back(tag, ctx.now()); }
  std::vector<std::pair<std::string, Timestamp>> fired;
};

TEST(SimRuntime, DeliversAfterLatencyAndStampsSender) {
  SimRuntime rt(t0());
  rt.add_agent(std::make_shared<ProbeAgent>("a"));
  rt.add_agent(std::make_shared<ProbeAgent>("b"));
  rt.invoke("a", [](Context& ctx) { ctx.send(note("b", "hi")); });
  rt.run_until_idle(t0() + Seconds(1));
  const auto* b = rt.agent_as<ProbeAgent>("b");
  ASSERT_EQ(b->inbox.size(), 1u);
  EXPECT_EQ(b->inbox[0].sender, "a");
  EXPECT_FALSE(b->inbox[0].message_id.empty());
  EXPECT_EQ(b->inbox[0].sent_at, t0());
  EXPECT_EQ(rt.messages_delivered(), 1u);
}

TEST(SimRuntime, PerSenderOrderIsPreserved) {
  SimRuntime rt(t0());
  rt.add_agent(std::make_shared<ProbeAgent>("a"));
  rt.add_agent(std::make_shared<ProbeAgent>("b"));
  rt.invoke("a", [](Context& ctx) {
    for (int i = 0; i < 50; ++i) ctx.send(note("b", std::to_string(i)));
  });
  rt.run_until_idle(t0() + Seconds(10));
  const auto* b = rt.agent_as<ProbeAgent>("b");
  ASSERT_EQ(b->inbox.size(), 50u);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(text(b->inbox[i]), std::to_string(i));
}

TEST(SimRuntime, TimersFireInOrderAndCancelledOnesDoNot) {
  SimRuntime rt(t0());
  rt.add_agent(std::make_shared<Ticker>());
  rt.run_until(t0() + Seconds(1));
  const auto* t = rt.agent_as<Ticker>("ticker");
  ASSERT_EQ(t->fired.size(), 2u);
  EXPECT_EQ(t->fired[0], std::make_pair(std::string("a"), t0() + Millis(100)));
  EXPECT_EQ(t->fired[1], std::make_pair(std::string("b"), t0() + Millis(200)));
  EXPECT_EQ(rt.now(), t0() + Seconds(1));
}

TEST(SimRuntime, UnknownOrOfflineReceiverBounces) {
  SimRuntime rt(t0());
  rt.add_agent(std::make_shared<ProbeAgent>("a"));
  rt.add_agent(std::make_shared<ProbeAgent>("b"));
  rt.set_online("b", false);
  rt.invoke("a", [](Context& ctx) {
    ctx.send(note("nobody", "x"));
    ctx.send(note("b", "y"));
  });
  rt.run_until_idle(t0() + Seconds(1));
  EXPECT_EQ(rt.agent_as<ProbeAgent>("a")->bounced.size(), 2u);
  EXPECT_TRUE(rt.agent_as<ProbeAgent>("b")->inbox.empty());
}

TEST(SimRuntime, FaultFilterDropsAndDelays) {
  SimRuntime rt(t0());
  rt.add_agent(std::make_shared<ProbeAgent>("a"));
  rt.add_agent(std::make_shared<ProbeAgent>("b", [](const AclMessage& m, Context& ctx) {
    ctx.record({{"kind", "got"}, {"text", text(m)}});
  }));
  auto transcript = std::make_shared<MemoryTranscript>();
  rt.set_transcript(transcript);
  rt.set_fault_filter([](const AclMessage& m) {
    FaultDecision f;
    if (text(m) == "drop") f.action = FaultAction::kDrop;
    if (text(m) == "slow") f.extra_delay = Millis{5000};
    return f;
  });
  rt.invoke("a", [](Context& ctx) {
    ctx.send(note("b", "drop"));
    ctx.send(note("b", "slow"));
    ctx.send(note("b", "fast"));
  });
  rt.run_until_idle(t0() + Seconds(10));
  const auto* b = rt.agent_as<ProbeAgent>("b");
  ASSERT_EQ(b->inbox.size(), 2u);
  EXPECT_EQ(text(b->inbox[0]), "fast");
  EXPECT_EQ(text(b->inbox[1]), "slow");
  int got = 0;
  for (const auto& r : transcript->records()) {
    if (r.value("kind", "") != "got") continue;
    ++got;
    EXPECT_EQ(r.at("agent"), "b");
    EXPECT_TRUE(r.contains("t"));
  }
  EXPECT_EQ(got, 2);
}

TEST(SimRuntime, HandlingCostSerializesAnAgent) {
  TimingModel timing;
  timing.network_latency = Millis{0};
  timing.message_cost = Millis{100};
  SimRuntime rt(t0(), timing);
  std::vector<Timestamp> handled;
  rt.add_agent(std::make_shared<ProbeAgent>("a"));
  rt.add_agent(std::make_shared<ProbeAgent>("b", [&](const AclMessage&, Context& ctx) { handled.push_back(ctx.now()); }));
  rt.invoke("a", [](Context& ctx) {
    for (int i = 0; i < 3; ++i) ctx.send(note("b", "x"));
  });
  rt.run_until_idle(t0() + Seconds(10));
  ASSERT_EQ(handled.size(), 3u);
  EXPECT_EQ(handled[1] - handled[0], Millis{100});
  EXPECT_EQ(handled[2] - handled[1], Millis{100});
}

TEST(SimRuntime, RunsAreReproducible) {
  auto run = [] {
    SimRuntime rt(t0());
    auto transcript = std::make_shared<MemoryTranscript>();
    rt.set_transcript(transcript);
    for (const char* id : {"a", "b", "c"}) {
      rt.add_agent(std::make_shared<ProbeAgent>(id, [](const AclMessage& m, Context& ctx) {
        if (text(m).size() < 6) ctx.send(note(m.sender, text(m) + "."));
      }));
    }
    rt.invoke("a", [](Context& ctx) {
      ctx.send(note("b", "x"));
      ctx.send(note("c", "y"));
    });
    rt.run_until_idle(t0() + Seconds(10));
    std::vector<std::string> out;
    for (const auto& r : transcript->records()) out.push_back(r.dump());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(SimRuntime, PostRunsOnSimulationThread) {
  SimRuntime rt(t0());
  int calls = 0;
  rt.post([&] { ++calls; });
  rt.add_agent(std::make_shared<ProbeAgent>("a"));
  rt.invoke("a", [](Context&) {}, Millis{10});
  rt.run_until_idle(t0() + Seconds(1));
  EXPECT_EQ(calls, 1);
}

}  // namespace
}  // namespace ramp::runtime
