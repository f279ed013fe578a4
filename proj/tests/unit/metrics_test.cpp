#include "ramp/metrics.hpp"

#include "ramp_test/support.hpp"

#include <gtest/gtest.h>

#include <fstream>

namespace ramp::harness {
namespace {

using nlohmann::json;

std::vector<json> won_auction(const std::string& id, int rounds, const std::string& price, std::int64_t t,
                              std::int64_t duration_ms) {
  return {
      {{"kind", "auction_started"}, {"t", t}, {"agent", "user1"}, {"auction_id", id}, {"units", 1},
       {"rounds", rounds}, {"request_price", "70.00"}},
      {{"kind", "auction_finished"},
       {"t", t + duration_ms},
       {"auction_id", id},
       {"outcome", "done"},
       {"started_at", t},
       {"finished_at", t + duration_ms},
       {"bidding_closed_at", t + duration_ms - 500},
       {"units", json::array({{{"unit", 0}, {"status", "confirmed"}, {"resource", "atlas1"}, {"price", price}}})}},
  };
}

void append(std::vector<json>& to, const std::vector<json>& from) { to.insert(to.end(), from.begin(), from.end()); }

TEST(Metrics, MeanSalePricePerRoundCount) {
  std::vector<json> records;
  append(records, won_auction("a1", 1, "66.00", 0, 18810));
  append(records, won_auction("a6", 6, "35.40", 100000, 91180));
  const auto rows = compute_metrics(records).by_rounds();
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].rounds, 1);
  EXPECT_DOUBLE_EQ(rows[0].mean_sale_price, 66.00);
  EXPECT_DOUBLE_EQ(rows[0].mean_duration_s, 18.81);
  EXPECT_EQ(rows[1].rounds, 6);
  EXPECT_DOUBLE_EQ(rows[1].mean_sale_price, 35.40);
  EXPECT_DOUBLE_EQ(rows[1].mean_duration_s, 91.18);
}

TEST(Metrics, OfferRatiosAgainstOriginalRequest) {
  auto records = won_auction("a1#x", 1, "60.00", 0, 1000);
  records[0]["auction_id"] = "a1";
  records[1]["auction_id"] = "a1";
  for (const char* p : {"70.00", "65.00", "60.00"}) {
    records.push_back({{"kind", "offer"}, {"t", 10}, {"agent", "r"}, {"conversation", "a1#0"}, {"round", 1},
                       {"requested", "70.00"}, {"price", p}});
  }
  // A later round asks for less; the ratio still uses the original 70.
  records.push_back({{"kind", "offer"}, {"t", 20}, {"agent", "r"}, {"conversation", "a1#0"}, {"round", 2},
                     {"requested", "60.00"}, {"price", "58.00"}});
  // Best offers are not part of the ratio.
  records.push_back({{"kind", "offer"}, {"t", 20}, {"agent", "r"}, {"conversation", "a1#0"}, {"round", 2},
                     {"requested", "60.00"}, {"price", "1.00"}, {"meets_requirements", false}});
  const auto m = compute_metrics(records);
  ASSERT_EQ(m.offers.size(), 5u);
  const auto median = m.median_offer_ratio();
  ASSERT_TRUE(median);
  EXPECT_DOUBLE_EQ(*median, (65.0 / 70 + 60.0 / 70) / 2);
}

TEST(Metrics, EmptyInput) {
  const auto m = compute_metrics({});
  EXPECT_TRUE(m.auctions.empty());
  EXPECT_TRUE(m.by_rounds().empty());
  EXPECT_FALSE(m.median_offer_ratio());
  EXPECT_FALSE(m.mean_response_ms());
  EXPECT_EQ(m.incomplete, 0u);
}

TEST(Metrics, TruncatedTranscriptIsIncomplete) {
  testing::TempDir dir;
  std::vector<json> records;
  append(records, won_auction("a1", 3, "50.00", 0, 45000));
  append(records, won_auction("a2", 3, "40.00", 60000, 45000));
  {
    std::ofstream out(dir.file("user1.jsonl"));
    out << records[0].dump() << '\n' << records[1].dump() << '\n' << records[2].dump() << '\n';
    out << records[3].dump().substr(0, 40);  // cut mid-line
  }
  const auto read = read_transcripts(dir.path().string());
  ASSERT_EQ(read.size(), 3u);
  const auto m = compute_metrics(read);
  EXPECT_EQ(m.incomplete, 1u);
  const auto rows = m.by_rounds();
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].auctions, 1);
  EXPECT_DOUBLE_EQ(rows[0].mean_sale_price, 50.0);
}

TEST(Metrics, WinnerCounts) {
  std::vector<json> records;
  append(records, won_auction("a1", 3, "50.00", 0, 1000));
  append(records, won_auction("a2", 3, "50.00", 5000, 1000));
  records[3]["units"][0]["resource"] = "thunder1";
  append(records, won_auction("a3", 3, "50.00", 9000, 1000));
  const auto counts = compute_metrics(records).winner_counts();
  EXPECT_EQ(counts.at("atlas1"), 2);
  EXPECT_EQ(counts.at("thunder1"), 1);
}

TEST(Metrics, CsvOutputIsDeterministic) {
  std::vector<json> records;
  append(records, won_auction("a1", 1, "66.00", 0, 18810));
  append(records, won_auction("a6", 6, "35.40", 100000, 91180));
  records.push_back({{"kind", "offer"}, {"t", 10}, {"agent", "r"}, {"conversation", "a1#0"}, {"round", 1},
                     {"requested", "70.00"}, {"price", "66.00"}, {"attractiveness", "3.10"}, {"load", 0.5}});
  testing::TempDir a, b;
  const auto files = write_csvs(compute_metrics(records), a.path().string());
  write_csvs(compute_metrics(records), b.path().string());
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) {
    EXPECT_EQ(testing::read_file(a.file(f)), testing::read_file(b.file(f))) << f;
    EXPECT_FALSE(testing::read_file(a.file(f)).empty()) << f;
  }
}

TEST(LinearFit, ExactLineAndNoise) {
  const auto exact = fit_line({1, 2, 3, 4}, {17, 32, 47, 62});
  EXPECT_NEAR(exact.slope, 15, 1e-12);
  EXPECT_NEAR(exact.intercept, 2, 1e-12);
  EXPECT_NEAR(exact.r2, 1, 1e-12);
  const auto noisy = fit_line({1, 2, 3, 4}, {1, 3, 2, 4});
  EXPECT_LT(noisy.r2, 1);
  EXPECT_GT(noisy.r2, 0);
}

}  // namespace
}  // namespace ramp::harness
