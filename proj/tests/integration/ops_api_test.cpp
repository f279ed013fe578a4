#include "ramp/ops_api.hpp"

#include "ramp_test/support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <thread>

namespace ramp::harness {
namespace {

using nlohmann::json;

class OpsApiTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto market = std::make_shared<Market>(table2_scenario(), Market::Options{});
    backend = std::make_shared<SimOpsBackend>(market, 120.0);
    api = std::make_unique<OpsApi>(backend);
    port = api->start("127.0.0.1", 0);
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  void TearDown() override {
    api->stop();
    backend->stop();
  }

  std::pair<int, json> get(const std::string& path) {
    auto r = client->Get(path);
    if (!r) return {0, json()};
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  std::pair<int, json> post(const std::string& path, const std::string& body, const std::string& type) {
    auto r = client->Post(path, body, type);
    if (!r) return {0, json()};
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  // Polls GET /auctions/{id} until the phase is one of `want`.
  json wait_phase(const std::string& id, std::initializer_list<std::string> want) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
    json a;
    while (std::chrono::steady_clock::now() < deadline) {
      a = get("/auctions/" + id).second;
      for (const auto& w : want)
        if (a.value("phase", "") == w) return a;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ADD_FAILURE() << "auction " << id << " stuck in " << a.dump();
    return a;
  }

  std::string manual_body() const {
    return json{{"rfql", testing::read_file(testing::testdata("rfq/exp1.xml"))},
                {"config", {{"rounds", 2}, {"approval", "manual"}}}}
        .dump();
  }

  std::shared_ptr<SimOpsBackend> backend;
  std::unique_ptr<OpsApi> api;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

TEST_F(OpsApiTest, PostStartsBidding) {
  const auto [status, body] = post("/auctions", testing::read_file(testing::testdata("rfq/exp1.xml")), "application/xml");
  ASSERT_EQ(status, 201);
  EXPECT_EQ(body.at("phase"), "bidding");
  const auto id = body.at("auction_id").get<std::string>();
  const auto list = get("/auctions");
  EXPECT_EQ(list.first, 200);
  EXPECT_EQ(list.second.at("auctions").size(), 1u);
  const auto done = wait_phase(id, {"done", "failed"});
  EXPECT_EQ(done.at("phase"), "done") << done.dump();
  EXPECT_EQ(done.at("rounds"), 3);
}

TEST_F(OpsApiTest, ApprovalOnAutoAuctionConflicts) {
  const auto [status, body] = post("/auctions", testing::read_file(testing::testdata("rfq/exp1.xml")), "application/xml");
  ASSERT_EQ(status, 201);
  const auto id = body.at("auction_id").get<std::string>();
  EXPECT_EQ(post("/auctions/" + id + "/units/0/approve", R"({"decision":"accept"})", "application/json").first, 409);
}

TEST_F(OpsApiTest, UnknownIdsAreNotFound) {
  EXPECT_EQ(get("/auctions/nope").first, 404);
  EXPECT_EQ(post("/auctions/nope/units/0/approve", "{}", "application/json").first, 404);
  EXPECT_EQ(post("/reservations/nope/cancel", "", "application/json").first, 404);
  EXPECT_EQ(get("/accounts/nobody").first, 404);
}

TEST_F(OpsApiTest, InvalidRfqIsRejected) {
  const auto [status, body] =
      post("/auctions", testing::read_file(testing::testdata("rfq/invalid_missing_cores.xml")), "application/xml");
  EXPECT_EQ(status, 400);
  EXPECT_TRUE(body.contains("error"));
  EXPECT_TRUE(get("/auctions").second.at("auctions").empty());
}

TEST_F(OpsApiTest, ResourcesCarryAttractiveness) {
  const auto [status, body] = post("/auctions", testing::read_file(testing::testdata("rfq/exp1.xml")), "application/xml");
  ASSERT_EQ(status, 201);
  wait_phase(body.at("auction_id").get<std::string>(), {"done", "failed"});
  const auto res = get("/resources");
  ASSERT_EQ(res.first, 200);
  EXPECT_EQ(res.second.at("resources").size(), 20u);
  int with_sample = 0;
  for (const auto& r : res.second.at("resources")) with_sample += r.contains("attractiveness");
  EXPECT_GT(with_sample, 0);
}

TEST_F(OpsApiTest, ManualApprovalThenCancelRecredits) {
  const auto before = get("/accounts/user1");
  ASSERT_EQ(before.first, 200);
  const auto [status, body] = post("/auctions", manual_body(), "application/json");
  ASSERT_EQ(status, 201);
  const auto id = body.at("auction_id").get<std::string>();
  wait_phase(id, {"awaiting-approval"});
  EXPECT_EQ(post("/auctions/" + id + "/units/0/approve", R"({"decision":"accept"})", "application/json").first, 200);
  wait_phase(id, {"done"});

  const auto reservations = get("/reservations").second.at("reservations");
  ASSERT_EQ(reservations.size(), 1u);
  const auto rid = reservations[0].at("reservation_id").get<std::string>();

  // Settlement reaches the bank shortly after the commit.
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  while (get("/accounts/user1").second.at("balance") == before.second.at("balance") &&
         std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  EXPECT_NE(get("/accounts/user1").second.at("balance"), before.second.at("balance"));

  EXPECT_EQ(post("/reservations/" + rid + "/cancel", "", "application/json").first, 202);
  EXPECT_EQ(post("/reservations/" + rid + "/cancel", "", "application/json").first, 409);
  while (get("/accounts/user1").second.at("balance") != before.second.at("balance") &&
         std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  EXPECT_EQ(get("/accounts/user1").second.at("balance"), before.second.at("balance"));
}

TEST(ParseAuctionRequest, XmlAndJsonBodies) {
  const auto xml = testing::read_file(testing::testdata("rfq/exp1.xml"));
  const auto [doc, cfg] = parse_auction_request(xml, "application/xml");
  EXPECT_EQ(doc.requests.size(), 1u);
  EXPECT_EQ(cfg.rounds, agents::AuctionConfig{}.rounds);
  const auto [doc2, cfg2] = parse_auction_request(
      json{{"rfql", xml}, {"config", {{"rounds", 5}, {"approval", "manual-best-offer-only"}}}}.dump(), "application/json");
  EXPECT_EQ(doc2, doc);
  EXPECT_EQ(cfg2.rounds, 5);
  EXPECT_EQ(cfg2.approval, agents::ApprovalMode::kManualBestOfferOnly);
  EXPECT_ANY_THROW(parse_auction_request("{}", "application/json"));
  EXPECT_ANY_THROW(parse_auction_request(json{{"rfql", xml}, {"config", {{"rounds", 0}}}}.dump(), "application/json"));
}

}  // namespace
}  // namespace ramp::harness
