#include "ramp/machine.hpp"
#include "ramp/pricing.hpp"
#include "ramp/protocol.hpp"
#include "ramp/rfql.hpp"
#include "ramp/user_agent.hpp"

#include <benchmark/benchmark.h>

#include <fstream>
#include <random>
#include <sstream>

namespace {

using namespace ramp;

const Timestamp kStart = Timestamp(std::chrono::time_point_cast<Millis>(parse_iso_datetime("2012-06-01T00:00:00Z")));

std::string read_testdata(const std::string& rel) {
  std::ifstream in(std::string(RAMP_TESTDATA_DIR) + "/" + rel);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void BM_MakeOffer(benchmark::State& state) {
  pricing::PricingConfig cfg{Money::from_units(80), Money::from_units(25)};
  std::mt19937 rng(1);
  std::uniform_int_distribution<std::int64_t> occupied(0, 1024), price(10, 120);
  for (auto _ : state) {
    const pricing::LoadSnapshot load(occupied(rng), 1024);
    benchmark::DoNotOptimize(pricing::make_offer(cfg, load, Money::from_units(price(rng))));
  }
}
BENCHMARK(BM_MakeOffer);

// Load snapshot against a queue of state.range(0) log jobs.
void BM_Availability(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::int64_t> at(0, 86400), wall(60, 7200), cores(1, 64);
  queuesim::SwfLog log;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    log.jobs.push_back(queuesim::make_swf_job(i + 1, at(rng), 0, wall(rng), cores(rng), 7200));
  }
  const queuesim::MachineModel m("m", 4096, std::move(log), queuesim::SimClock{kStart, 0});
  for (auto _ : state) benchmark::DoNotOptimize(m.availability(at(rng), cores(rng), wall(rng)));
}
BENCHMARK(BM_Availability)->Arg(100)->Arg(1000)->Arg(10000);

protocol::AclMessage cfp() {
  const auto doc = rfql::parse_rfq(read_testdata("rfq/exp1.xml"));
  protocol::AclMessage m;
  m.performative = protocol::Performative::kCallForProposals;
  m.sender = "user1";
  m.receiver = "atlas1";
  m.conversation_id = "user1-a1#0";
  m.message_id = "user1-17";
  m.sent_at = kStart;
  m.content = protocol::RfqContent{doc.requests.at(0), 0, 2};
  return m;
}

void BM_EncodeMessage(benchmark::State& state) {
  const auto m = cfp();
  for (auto _ : state) benchmark::DoNotOptimize(protocol::encode_message(m));
}
BENCHMARK(BM_EncodeMessage);

void BM_DecodeMessage(benchmark::State& state) {
  const auto bytes = protocol::encode_message(cfp());
  for (auto _ : state) benchmark::DoNotOptimize(protocol::decode_message(bytes));
}
BENCHMARK(BM_DecodeMessage);

// Ranking state.range(0) offers with plenty of price ties.
void BM_RankOffers(benchmark::State& state) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> price(25, 40), start(0, 3600);
  std::vector<agents::ReceivedOffer> offers;
  for (int i = 0; i < state.range(0); ++i) {
    protocol::Offer o;
    o.offer_id = "o" + std::to_string(i);
    o.resource_id = "r" + std::to_string(i);
    o.price = Money::from_units(price(rng));
    o.proposed_start = std::chrono::time_point_cast<Seconds>(kStart) + Seconds(start(rng));
    o.meets_requirements = i % 7 != 0;
    o.received_at = kStart + Millis(i);
    offers.push_back({o, "m" + std::to_string(i)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(agents::rank_offers(offers, 3600));
}
BENCHMARK(BM_RankOffers)->Arg(20)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
