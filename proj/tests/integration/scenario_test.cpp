#include "ramp/experiments.hpp"
#include "ramp/metrics.hpp"
#include "ramp/scenario.hpp"

#include "ramp_test/support.hpp"

#include <gtest/gtest.h>

namespace ramp::harness {
namespace {

ScenarioConfig minimal() {
  auto c = table2_scenario();
  c.resources.resize(1);
  c.workloads.resize(1);
  c.repetitions = 1;
  return c;
}

int count_kind(const std::vector<nlohmann::json>& records, const std::string& kind) {
  int n = 0;
  for (const auto& r : records) n += r.value("kind", "") == kind;
  return n;
}

TEST(Scenario, JsonRoundTripAndBundledCopy) {
  const auto c = table2_scenario();
  EXPECT_EQ(c.resources.size(), 20u);
  EXPECT_EQ(c.workloads.size(), 13u);
  EXPECT_EQ(ScenarioConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_EQ(ScenarioConfig::load(testing::testdata("scenarios/table2.json")).to_json(), c.to_json());
}

TEST(Scenario, WorkloadRfqIsValid) {
  const auto now = table2_scenario().system_start;
  for (auto w : table3_workloads()) {
    w.units = 3;
    const auto doc = workload_rfq(w, now, w.name);
    ASSERT_EQ(doc.requests.size(), 3u);
    EXPECT_TRUE(rfql::validate_rfq(doc).empty()) << w.name;
    EXPECT_EQ(doc.requests[0].requested_cores(), w.cores);
    EXPECT_EQ(Timestamp(*doc.requests[0].earliest_start), now + Seconds(w.start_delay));
  }
}

TEST(Scenario, SyntheticLogHitsTargetLoad) {
  SyntheticLogSpec spec;
  spec.load = 0.4;
  const std::int64_t cores = 1024, to = 3 * 86400;
  const auto log = synthetic_log(spec, cores, 0, to);
  ASSERT_FALSE(log.jobs.empty());
  const auto m = testing::machine(cores, log.jobs);
  double sum = 0;
  int samples = 0;
  for (std::int64_t t = 3600; t < to - 3600; t += 600, ++samples) {
    sum += m.availability(t, 1, 1).load_fraction();
  }
  EXPECT_NEAR(sum / samples, 0.4, 0.1);

  spec.constant = true;
  const auto flat = testing::machine(cores, synthetic_log(spec, cores, 0, to).jobs);
  EXPECT_NEAR(flat.availability(86400, 1, 600).load_fraction(), 0.4, 0.01);
}

TEST(Scenario, OneResourceOneWorkloadGivesOneRecord) {
  const auto run = run_scenario(minimal());
  const auto m = compute_metrics(run.records);
  ASSERT_EQ(m.auctions.size(), 1u);
  EXPECT_TRUE(m.auctions[0].complete);
  EXPECT_EQ(m.incomplete, 0u);
}

TEST(Scenario, BelowEveryFloorFailsWithoutLedgerEntry) {
  auto c = minimal();
  c.workloads[0].price = Money::from_units(1);
  const auto run = run_scenario(c);
  const auto m = compute_metrics(run.records);
  ASSERT_EQ(m.auctions.size(), 1u);
  EXPECT_EQ(m.auctions[0].outcome, "Failed");
  for (const auto& e : run.ledger) EXPECT_EQ(e.kind, bank::EntryKind::kDeposit);
}

TEST(Scenario, FullTableRunsEveryWorkloadEachRepetition) {
  auto c = table2_scenario();
  c.repetitions = 1;
  const auto run = run_scenario(c);
  EXPECT_EQ(count_kind(run.records, "auction_started"), 13);
  EXPECT_EQ(count_kind(run.records, "auction_finished"), 13);
  const auto m = compute_metrics(run.records);
  const auto bounds = check_offer_bounds(m);
  EXPECT_GT(bounds.offers, 0u);
  EXPECT_EQ(bounds.bound_violations, 0u);
  EXPECT_EQ(bounds.monotonic_violations, 0u);
  Money total;
  for (const auto& [_, b] : bank::replay(run.ledger)) total += b;
  EXPECT_EQ(total, Money{});
}

TEST(Scenario, RunsAreDeterministic) {
  const auto a = run_scenario(minimal());
  const auto b = run_scenario(minimal());
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) ASSERT_EQ(a.records[i], b.records[i]) << i;
}

TEST(Studies, SmallAtomicityAndHoldRuns) {
  const auto at = atomicity_study(30, 5);
  EXPECT_EQ(at.runs, 30);
  EXPECT_EQ(at.partial, 0);
  EXPECT_EQ(at.unbalanced, 0);
  EXPECT_EQ(at.settlement_mismatches, 0);
  EXPECT_EQ(at.all_confirmed + at.failed, 30);
  const auto hold = hold_timeout_study(10, 3);
  EXPECT_EQ(hold.freed_in_time, 10);
}

TEST(Studies, BelowFloor) {
  const auto s = below_floor_study(table2_scenario());
  EXPECT_EQ(s.auto_outcome, "Failed");
  EXPECT_EQ(s.auto_ledger_entries, 0u);
  EXPECT_TRUE(s.manual_pending);
  EXPECT_EQ(s.manual_price, Money::from_units(25));
  EXPECT_FALSE(s.manual_meets_requirements);
}

}  // namespace
}  // namespace ramp::harness
