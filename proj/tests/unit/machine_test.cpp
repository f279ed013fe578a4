#include "ramp/error.hpp"
#include "ramp/machine.hpp"

#include "ramp_test/queue_oracle.hpp"
#include "ramp_test/support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <random>

namespace ramp::queuesim {
namespace {

using testing::job;
using testing::machine;
using testing::t0;

TEST(LogTime, OriginAndOffset) {
  EXPECT_EQ(log_time(SimClock{t0(), 0}, t0()), 0);
  EXPECT_EQ(log_time(SimClock{t0(), 3370000}, t0() + Seconds(60)), 3370060);
  EXPECT_THROW(log_time(SimClock{t0(), 0}, t0() - Seconds(1)), Error);
  EXPECT_EQ(wall_time_at(SimClock{t0(), 100}, 160), t0() + Seconds(60));
}

TEST(Snapshot, TwoOverlappingJobs) {
  auto m = machine(8, {job(1, 0, 100, 4), job(2, 10, 100, 4)});
  auto a = m.availability(50, 2, 10);
  EXPECT_FALSE(a.feasible);
  EXPECT_EQ(a.load, Rational(1));
  a = m.availability(150, 2, 10);
  EXPECT_TRUE(a.feasible);
  EXPECT_EQ(a.load, Rational(0));
}

TEST(Snapshot, EmptyLog) {
  auto m = machine(8, {});
  for (std::int64_t c = 1; c <= 8; ++c) {
    const auto a = m.availability(1000, c, 60);
    EXPECT_TRUE(a.feasible);
    EXPECT_EQ(a.load, Rational(0));
  }
  EXPECT_FALSE(m.availability(0, 9, 60).feasible);
}

TEST(Reserve, BlocksTheWindow) {
  auto m = machine(8, {});
  const auto id = m.reserve(100, 8, 100);
  ASSERT_TRUE(id);
  EXPECT_FALSE(m.availability(150, 1, 1).feasible);
  EXPECT_TRUE(m.availability(200, 8, 10).feasible);
}

TEST(Reserve, TwoHalvesThenFull) {
  auto m = machine(8, {});
  EXPECT_TRUE(m.reserve(0, 4, 100));
  EXPECT_TRUE(m.reserve(0, 4, 100));
  EXPECT_FALSE(m.reserve(0, 4, 100));
  EXPECT_FALSE(m.reserve(50, 1, 10));
}

TEST(Reserve, CancelRestoresSnapshot) {
  auto m = machine(16, {job(1, 0, 300, 6)});
  const auto before = m.availability(50, 4, 100);
  const auto id = m.reserve(80, 5, 40);
  ASSERT_TRUE(id);
  EXPECT_NE(m.availability(50, 4, 100).max_occupied, before.max_occupied);
  m.cancel(*id);
  const auto after = m.availability(50, 4, 100);
  EXPECT_EQ(after.max_occupied, before.max_occupied);
  EXPECT_EQ(after.feasible, before.feasible);
}

TEST(Cancel, TransitionsAndErrors) {
  auto m = machine(8, {});
  const auto id = *m.reserve(0, 2, 10);
  EXPECT_EQ(m.find(id)->state, ReservationState::kTentative);
  m.cancel(id);
  EXPECT_EQ(m.find(id)->state, ReservationState::kCancelled);
  EXPECT_NO_THROW(m.cancel(id));
  EXPECT_EQ(m.find(id)->state, ReservationState::kCancelled);
  EXPECT_THROW(m.cancel("nope"), Error);
}

TEST(Holds, ExpireFreesCapacity) {
  auto m = machine(8, {});
  const auto id = *m.reserve(100, 8, 100);
  m.hold(id, t0() + Seconds(30));
  EXPECT_TRUE(m.expire_holds(t0() + Seconds(10)).empty());
  const auto expired = m.expire_holds(t0() + Seconds(31));
  ASSERT_EQ(expired, std::vector<std::string>{id});
  EXPECT_EQ(m.find(id)->state, ReservationState::kExpired);
  EXPECT_TRUE(m.availability(100, 8, 100).feasible);
}

TEST(Holds, ConfirmedIsNotExpired) {
  auto m = machine(8, {});
  const auto id = *m.reserve(100, 8, 100);
  m.hold(id, t0() + Seconds(30));
  m.confirm(id);
  EXPECT_TRUE(m.expire_holds(t0() + Seconds(3600)).empty());
  EXPECT_EQ(m.find(id)->state, ReservationState::kConfirmed);
  EXPECT_TRUE(machine(8, {}).expire_holds(t0()).empty());
}

TEST(PredictiveAdapter, ForwardsAndShiftsStart) {
  auto inner = std::make_unique<MachineModel>(machine(8, {job(1, 0, 100, 8)}));
  PredictiveQueueAdapter plain(std::make_unique<MachineModel>(machine(8, {job(1, 0, 100, 8)})));
  EXPECT_EQ(plain.earliest_feasible_start(0, 1000, 4, 10), 100);
  PredictiveQueueAdapter shifted(std::move(inner), [](std::int64_t from, std::int64_t) { return from + 500; });
  EXPECT_EQ(shifted.earliest_feasible_start(0, 1000, 4, 10), 500);
}

class QueueOracleTest : public ::testing::Test {
 protected:
  std::mt19937_64 rng{20240611};
};

TEST_F(QueueOracleTest, SnapshotMatchesPerSecondScan) {
  for (int c = 0; c < 200; ++c) {
    auto qc = testing::random_queue_case(rng);
    auto m = machine(qc.cores, qc.jobs);
    testing::QueueOracle oracle{qc.cores, {}};
    for (const auto& j : qc.jobs) oracle.add_job(j);
    for (int q = 0; q < 10; ++q) {
      const std::int64_t at = std::uniform_int_distribution<std::int64_t>(0, 2600)(rng);
      const std::int64_t cores = std::uniform_int_distribution<std::int64_t>(1, qc.cores + 2)(rng);
      const std::int64_t dur = std::uniform_int_distribution<std::int64_t>(1, 300)(rng);
      const auto got = m.availability(at, cores, dur);
      const auto want = oracle.query(at, cores, dur);
      ASSERT_EQ(got.feasible, want.feasible) << "case " << c << " at " << at;
      ASSERT_NEAR(got.load_fraction(), want.load, 1e-9);
    }
  }
}

TEST_F(QueueOracleTest, EarliestStartMatchesScanWithReservations) {
  for (int c = 0; c < 100; ++c) {
    auto qc = testing::random_queue_case(rng, 60, 32);
    auto m = machine(qc.cores, qc.jobs);
    testing::QueueOracle oracle{qc.cores, {}};
    for (const auto& j : qc.jobs) oracle.add_job(j);
    for (int r = 0; r < 5; ++r) {
      const std::int64_t at = std::uniform_int_distribution<std::int64_t>(0, 2000)(rng);
      const std::int64_t cores = std::uniform_int_distribution<std::int64_t>(1, qc.cores)(rng);
      const std::int64_t dur = std::uniform_int_distribution<std::int64_t>(1, 200)(rng);
      const bool free = oracle.query(at, cores, dur).feasible;
      const auto id = m.reserve(at, cores, dur);
      ASSERT_EQ(id.has_value(), free);
      if (id) oracle.busy.push_back({at, at + dur, cores});
    }
    const std::int64_t from = std::uniform_int_distribution<std::int64_t>(0, 1500)(rng);
    const std::int64_t latest = from + std::uniform_int_distribution<std::int64_t>(0, 800)(rng);
    const std::int64_t cores = std::uniform_int_distribution<std::int64_t>(1, qc.cores)(rng);
    const std::int64_t dur = std::uniform_int_distribution<std::int64_t>(1, 200)(rng);
    ASSERT_EQ(m.earliest_feasible_start(from, latest, cores, dur), oracle.earliest(from, latest, cores, dur))
        << "case " << c;
  }
}

TEST_F(QueueOracleTest, LiveReservationsNeverOverbook) {
  for (int c = 0; c < 50; ++c) {
    auto qc = testing::random_queue_case(rng, 40, 16);
    auto m = machine(qc.cores, qc.jobs);
    std::vector<std::string> ids;
    for (int op = 0; op < 60; ++op) {
      const std::int64_t at = std::uniform_int_distribution<std::int64_t>(0, 2000)(rng);
      const std::int64_t cores = std::uniform_int_distribution<std::int64_t>(1, qc.cores)(rng);
      if (auto id = m.reserve(at, cores, std::uniform_int_distribution<std::int64_t>(1, 200)(rng))) ids.push_back(*id);
      if (!ids.empty() && std::uniform_int_distribution<int>(0, 3)(rng) == 0) m.cancel(ids[ids.size() / 2]);
    }
    // Reservations alone must fit; log jobs may already overbook the log's own history.
    for (std::int64_t t = 0; t < 2300; t += 7) {
      std::int64_t held = 0;
      for (const auto& r : m.reservations())
        if (r.occupies() && r.start <= t && t < r.end()) held += r.cores;
      ASSERT_LE(held, qc.cores);
    }
  }
}

TEST(MachineConfig, FromJsonValidates) {
  EXPECT_THROW(MachineConfig::from_json({{"log_path", "x"}, {"total_cores", 0}}), ConfigError);
  EXPECT_THROW(MachineConfig::from_json({{"log_path", "x"}, {"total_cores", 8}, {"time_offset_seconds", -1}}),
               ConfigError);
  const auto c = MachineConfig::from_json({{"log_path", testing::testdata("swf/pwa_sample_50.swf")},
                                           {"total_cores", 256},
                                           {"time_offset_seconds", 50000}});
  auto m = load_machine("pwa", c);
  EXPECT_EQ(m->log().jobs.size(), 50u);
  EXPECT_EQ(m->clock().log_offset, 50000);
}

}  // namespace
}  // namespace ramp::queuesim
