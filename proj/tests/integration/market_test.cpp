#include "ramp/scenario.hpp"

#include <gtest/gtest.h>

namespace ramp::harness {
namespace {

TEST(Market, SingleWorkloadSettles) {
  auto cfg = table2_scenario();
  Market market(cfg, {});
  auto doc = workload_rfq(cfg.workloads[0], market.runtime().now(), "smoke");
  const auto id = market.start_auction(0, doc, market.auction_config(3));
  ASSERT_TRUE(market.run_auction(0, id));
  const auto* a = market.user().auction(id);
  ASSERT_NE(a, nullptr);
  EXPECT_EQ(a->phase, agents::AuctionPhase::kDone) << a->failure;
  EXPECT_EQ(market.user().purchases().size(), 1u);
  market.advance(Millis{5000});
  int settlements = 0;
  for (const auto& e : market.bank().entries())
    if (e.kind == bank::EntryKind::kSettlement) ++settlements;
  EXPECT_EQ(settlements, 1);
}

}  // namespace
}  // namespace ramp::harness
