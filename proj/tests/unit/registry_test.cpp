#include "ramp/registry.hpp"

#include "ramp_test/support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fmt/format.h>

namespace ramp::harness {
namespace {

using testing::t0;

constexpr Millis kInterval{5000};

TEST(Registry, TwentyRegistered) {
  Registry r(kInterval);
  for (int i = 0; i < 20; ++i) r.heartbeat(fmt::format("res{:02d}", i), fmt::format("10.0.0.{}:7701", i), t0());
  EXPECT_EQ(r.alive(t0()).size(), 20u);
}

TEST(Registry, SilentResourceDropsAfterThreeIntervals) {
  Registry r(kInterval);
  for (int i = 0; i < 20; ++i) r.heartbeat(fmt::format("res{:02d}", i), "a", t0());
  Timestamp now = t0();
  for (int tick = 1; tick <= 4; ++tick) {
    now = t0() + tick * kInterval;
    for (int i = 1; i < 20; ++i) r.heartbeat(fmt::format("res{:02d}", i), "a", now);
    EXPECT_EQ(r.alive(now).size(), tick <= 3 ? 20u : 19u) << tick;
  }
  const auto alive = r.alive(now);
  EXPECT_EQ(alive.front().resource_id, "res01");
  EXPECT_EQ(r.entries(now).size(), 20u);
}

TEST(Registry, ReRegisterRevives) {
  Registry r(kInterval);
  r.heartbeat("atlas1", "a", t0());
  const auto later = t0() + 10 * kInterval;
  EXPECT_TRUE(r.alive(later).empty());
  r.heartbeat("atlas1", "a", later);
  EXPECT_EQ(r.alive(later).size(), 1u);
}

TEST(Registry, NewAddressSupersedes) {
  Registry r(kInterval);
  r.heartbeat("atlas1", "10.0.0.1:7701", t0());
  r.heartbeat("atlas1", "10.0.0.2:7701", t0() + Seconds(1));
  const auto alive = r.alive(t0() + Seconds(1));
  ASSERT_EQ(alive.size(), 1u);
  EXPECT_EQ(alive[0].address, "10.0.0.2:7701");
}

TEST(Registry, WireProtocol) {
  Registry r(kInterval);
  EXPECT_TRUE(r.handle({{"op", "register"}, {"resource_id", "x"}, {"address", "h:1"}}, t0()).at("ok").get<bool>());
  EXPECT_TRUE(r.handle({{"op", "heartbeat"}, {"resource_id", "y"}, {"address", "h:2"}}, t0()).at("ok").get<bool>());
  const auto list = r.handle({{"op", "list"}}, t0());
  ASSERT_EQ(list.at("entries").size(), 2u);
  EXPECT_EQ(registry_entry_from_json(list.at("entries")[1]).address, "h:2");
  EXPECT_FALSE(r.handle({{"op", "explode"}}, t0()).value("ok", true));
  EXPECT_FALSE(r.handle({{"op", "register"}}, t0()).value("ok", true));
}

TEST(Registry, Remove) {
  Registry r(kInterval);
  r.heartbeat("x", "a", t0());
  r.remove("x");
  EXPECT_TRUE(r.alive(t0()).empty());
}

}  // namespace
}  // namespace ramp::harness
