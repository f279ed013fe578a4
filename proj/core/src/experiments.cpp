#include "ramp/experiments.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <set>

namespace ramp::harness {

using nlohmann::json;
using protocol::Performative;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

WorkloadSpec find_workload(const ScenarioConfig& c, const std::string& name) {
  for (const auto& w : c.workloads)
    if (w.name == name) return w;
  for (const auto& w : table3_workloads())
    if (w.name == name) return w;
  throw ConfigError("unknown workload " + name);
}

json fit_json(const LinearFit& f) { return {{"intercept", f.intercept}, {"slope", f.slope}, {"r2", f.r2}}; }

json offers_json(const OfferBoundReport& r) {
  json j{{"offers", r.offers}, {"bound_violations", r.bound_violations}, {"monotonic_violations", r.monotonic_violations}};
  if (r.median_ratio) j["median_ratio"] = *r.median_ratio;
  return j;
}

void merge(OfferBoundReport& into, const OfferBoundReport& r, std::vector<double>& ratios, const Metrics& m) {
  into.offers += r.offers;
  into.bound_violations += r.bound_violations;
  into.monotonic_violations += r.monotonic_violations;
  std::map<std::string, Money> original;
  for (const auto& a : m.auctions) original[a.auction_id] = a.request_price;
  for (const auto& o : m.offers) {
    auto it = original.find(o.auction_id);
    if (o.meets_requirements && it != original.end() && it->second > Money{})
      ratios.push_back(o.price.to_double() / it->second.to_double());
  }
}

std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

}  // namespace

void control_loads(ScenarioConfig& config, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& r : config.resources) {
    SyntheticLogSpec s;
    s.seed = rng();
    // Whole percent keeps the held core counts easy to reason about.
    s.load = std::round(dist(rng) * 100) / 100;
    s.constant = true;
    r.synthetic = s;
  }
}

OfferBoundReport check_offer_bounds(const Metrics& m) {
  OfferBoundReport r;
  std::map<std::tuple<std::string, int, std::string>, std::vector<const OfferSample*>> series;
  for (const auto& o : m.offers) {
    if (!o.meets_requirements) continue;
    ++r.offers;
    if (o.price < o.min_price || o.price > o.requested) ++r.bound_violations;
    series[{o.auction_id, o.unit, o.resource}].push_back(&o);
  }
  for (auto& [_, v] : series) {
    std::stable_sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->round < b->round; });
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i]->round > v[i - 1]->round && v[i]->price > v[i - 1]->price) ++r.monotonic_violations;
  }
  r.median_ratio = m.median_offer_ratio();
  return r;
}

RoundsStudy rounds_study(const ScenarioConfig& base, int max_rounds, int reps) {
  Stopwatch clock;
  RoundsStudy s;
  std::vector<double> ratios;
  for (int n = 1; n <= max_rounds; ++n) {
    auto cfg = base;
    cfg.name = fmt::format("{}-r{}", base.name, n);
    cfg.repetitions = reps;
    for (auto& w : cfg.workloads) {
      w.rounds = n;
      w.units = 1;
    }
    const auto run = run_scenario(cfg);
    const auto m = compute_metrics(run.records);
    for (const auto& row : m.by_rounds()) s.rows.push_back(row);
    merge(s.offers, check_offer_bounds(m), ratios, m);
  }
  s.offers.median_ratio = median(ratios);
  std::vector<double> x, y;
  for (const auto& row : s.rows) {
    x.push_back(row.rounds);
    y.push_back(row.mean_duration_s);
  }
  if (x.size() >= 2) s.duration_fit = fit_line(x, y);
  s.price_non_increasing = true;
  for (std::size_t i = 1; i < s.rows.size() && s.rows[i].rounds <= 6; ++i)
    if (s.rows[i].mean_sale_price > s.rows[i - 1].mean_sale_price + 1e-9) s.price_non_increasing = false;
  // Plateau: every N >= 6 within +-10% of the N = 6 price.
  s.plateau = true;
  double ref = 0;
  for (const auto& row : s.rows)
    if (row.rounds == 6) ref = row.mean_sale_price;
  for (const auto& row : s.rows) {
    if (row.rounds < 6 || ref <= 0) continue;
    const double dev = std::abs(row.mean_sale_price - ref) / ref;
    s.plateau_spread = std::max(s.plateau_spread, dev);
    if (dev > 0.10) s.plateau = false;
  }
  if (ref <= 0 && max_rounds >= 6) s.plateau = false;
  s.wall_seconds = clock.seconds();
  return s;
}

WinnerStudy winner_study(const ScenarioConfig& base, int reps, std::uint64_t load_seed) {
  Stopwatch clock;
  WinnerStudy s;
  std::vector<double> ratios;
  for (int rep = 0; rep < reps; ++rep) {
    auto cfg = base;
    cfg.name = fmt::format("{}-w{}", base.name, rep + 1);
    cfg.repetitions = 1;
    control_loads(cfg, load_seed + static_cast<std::uint64_t>(rep));
    const auto run = run_scenario(cfg);
    const auto m = compute_metrics(run.records);
    merge(s.offers, check_offer_bounds(m), ratios, m);

    std::map<std::pair<std::string, int>, std::vector<const OfferSample*>> by_round;
    for (const auto& o : m.offers)
      if (o.unit == 0 && o.meets_requirements) by_round[{o.auction_id, o.round}].push_back(&o);

    for (const auto& a : m.auctions) {
      if (!a.complete) continue;
      ++s.auctions;
      const auto winner = a.winner();
      if (winner.empty()) continue;
      ++s.won;
      ++s.winners[winner];
      std::optional<Money> price;
      for (const auto& u : a.unit_outcomes)
        if (u.unit == 0) price = u.price;
      // The winning offer is the winner's earliest offer at the winning price.
      int round = -1;
      for (const auto& o : m.offers) {
        if (o.auction_id == a.auction_id && o.unit == 0 && o.resource == winner && price && o.price == *price &&
            o.meets_requirements && (round < 0 || o.round < round))
          round = o.round;
      }
      int rank = 0;
      if (round >= 0) {
        const auto& offers = by_round[{a.auction_id, round}];
        Money mine;
        for (const auto* o : offers)
          if (o->resource == winner) mine = o->attractiveness;
        rank = 1;
        for (const auto* o : offers)
          if (o->attractiveness > mine) ++rank;
      }
      if (rank >= 1 && rank <= 3) {
        ++s.within_top3;
      } else {
        s.misses.emplace_back(fmt::format("rep{}/{}", rep + 1, a.auction_id), winner, rank);
      }
    }
  }
  s.offers.median_ratio = median(ratios);
  s.wall_seconds = clock.seconds();
  return s;
}

UnitsStudy units_study(const ScenarioConfig& base, int max_units, int reps) {
  Stopwatch clock;
  UnitsStudy s;
  const std::vector<std::string> names{"exp1", "exp4", "exp7"};
  for (int u = 1; u <= max_units; ++u) {
    auto cfg = base;
    cfg.name = fmt::format("{}-u{}", base.name, u);
    cfg.repetitions = reps;
    cfg.workloads.clear();
    for (const auto& n : names) {
      auto w = find_workload(base, n);
      w.units = u;
      cfg.workloads.push_back(w);
    }
    const auto m = compute_metrics(run_scenario(cfg).records);
    std::vector<double> spans, finals;
    for (const auto& a : m.auctions) {
      if (!a.complete) continue;
      std::vector<double> rs;
      for (const auto& r : a.round_stats)
        if (r.response_span) rs.push_back(static_cast<double>(r.response_span->count()) / 1000.0);
      spans.push_back(mean(rs));
      finals.push_back(static_cast<double>(a.finalize.count()) / 1000.0);
    }
    s.rows.push_back(UnitsRow{u, mean(spans), mean(finals), static_cast<int>(spans.size())});
  }
  std::vector<double> x, y, f;
  for (const auto& r : s.rows) {
    x.push_back(r.units);
    y.push_back(r.round_span_s);
    f.push_back(r.finalize_s);
  }
  if (x.size() >= 2) {
    s.span_fit = fit_line(x, y);
    s.finalize_fit = fit_line(x, f);
  }
  s.wall_seconds = clock.seconds();
  return s;
}

UsersStudy users_study(const ScenarioConfig& base, int max_users, int reps) {
  Stopwatch clock;
  UsersStudy s;
  const auto w = find_workload(base, "exp1");
  for (int users = 1; users <= max_users; ++users) {
    auto memory = std::make_shared<runtime::MemoryTranscript>();
    Market market(base, {users, memory, std::nullopt});
    for (int rep = 0; rep < reps; ++rep) {
      std::vector<std::string> ids;
      for (int i = 0; i < users; ++i) {
        auto doc = workload_rfq(w, market.runtime().now(), fmt::format("users{}-{}-{}", users, rep + 1, i + 1));
        ids.push_back(market.start_auction(static_cast<std::size_t>(i), std::move(doc), market.auction_config(w.rounds)));
      }
      auto done = [&] {
        for (int i = 0; i < users; ++i) {
          const auto* a = market.user(static_cast<std::size_t>(i)).auction(ids[static_cast<std::size_t>(i)]);
          if (!a || !a->closed()) return false;
        }
        return true;
      };
      market.runtime().run_until(done, market.runtime().now() + Millis{3600000});
      market.advance(base.workload_gap);
    }
    const auto m = compute_metrics(memory->records());
    s.rows.push_back(UsersRow{users, m.mean_response_ms().value_or(0), static_cast<int>(m.responses.size())});
  }
  std::vector<double> x, y;
  for (const auto& r : s.rows) {
    x.push_back(r.users);
    y.push_back(r.mean_response_ms);
  }
  if (x.size() >= 2) s.fit = fit_line(x, y);
  s.wall_seconds = clock.seconds();
  return s;
}

AtomicityStudy atomicity_study(int runs, std::uint64_t seed, double fault_rate) {
  Stopwatch clock;
  AtomicityStudy s;
  auto cfg = table2_scenario();
  cfg.name = "atomicity";
  cfg.horizon = 3 * 86400;
  cfg.hold_timeout = Millis{30000};
  // Eight resources across the price bands keep each run cheap.
  cfg.resources.erase(
      std::remove_if(cfg.resources.begin(), cfg.resources.end(),
                     [](const ResourceSpec& r) {
                       static const std::set<std::string> keep{"atlas1",  "thunder3", "intrepid2", "intrepid5",
                                                               "ricc1",   "ricc3",    "curie1",    "curie3"};
                       return !keep.count(r.name);
                     }),
      cfg.resources.end());
  control_loads(cfg, seed, 0.05, 0.5);

  auto rng = std::make_shared<std::mt19937_64>(seed);
  Market market(cfg, {1, nullptr, std::nullopt});
  auto& rt = market.runtime();
  rt.set_message_logging(false);
  rt.set_fault_filter([rng, fault_rate](const protocol::AclMessage& msg) {
    runtime::FaultDecision d;
    if (msg.sender == "bank" || msg.receiver == "bank") return d;
    std::uniform_real_distribution<double> u(0, 1);
    const bool from_user = msg.sender.rfind("user", 0) == 0;
    switch (msg.performative) {
      case Performative::kAcceptProposal:
        // The resource refuses at the Agree step.
        if (u(*rng) < fault_rate) d.action = runtime::FaultAction::kBounceRefuse;
        break;
      case Performative::kAgree: {
        const double x = u(*rng);
        if (x < fault_rate) {
          d.action = runtime::FaultAction::kDrop;
        } else if (x < fault_rate * 1.5) {
          d.extra_delay = Millis{12000};  // arrives after the accept timeout
        }
        break;
      }
      case Performative::kConfirm: {
        const double x = u(*rng);
        if (from_user && x < fault_rate / 2) {
          d.action = runtime::FaultAction::kBounceRefuse;
        } else if (x < fault_rate) {
          d.action = runtime::FaultAction::kDrop;
        }
        break;
      }
      default:
        break;
    }
    return d;
  });

  std::mt19937_64 pick(seed ^ 0x5eed);
  const std::int64_t cores[] = {16, 64, 256, 1024};
  for (int run = 0; run < runs; ++run) {
    WorkloadSpec w;
    w.name = fmt::format("atom{}", run + 1);
    w.cores = cores[pick() % 4];
    w.units = 2 + static_cast<int>(pick() % 3);
    w.price = Money::from_units(40 + static_cast<std::int64_t>(pick() % 41));
    w.start_delay = 300 + static_cast<std::int64_t>(pick() % 3600);
    w.rounds = 1 + static_cast<int>(pick() % 2);
    auto doc = workload_rfq(w, rt.now(), w.name);
    const auto id = market.start_auction(0, std::move(doc), market.auction_config(w.rounds));
    ++s.runs;
    if (!market.run_auction(0, id)) {
      ++s.incomplete;
      s.problems.push_back(id + ": did not close");
      continue;
    }
    // Let holds lapse and compensations reach the bank.
    market.advance(cfg.hold_timeout * 3);

    const auto* a = market.user().auction(id);
    const bool confirmed = a->phase == agents::AuctionPhase::kDone;
    confirmed ? ++s.all_confirmed : ++s.failed;

    const auto ledger = market.bank().entries();
    std::map<std::string, int> settlements, recredits;
    for (const auto& e : ledger) {
      if (e.kind == bank::EntryKind::kSettlement) ++settlements[e.reservation_id];
      if (e.kind == bank::EntryKind::kRecredit) ++recredits[e.reservation_id];
    }
    int live_confirmed = 0;
    for (auto* r : market.resources()) {
      for (const auto& [rid, d] : r->deals()) {
        if (d.conversation_id.rfind(id + "#", 0) != 0) continue;
        if (d.state != agents::DealState::kConfirmed) {
          // A compensated unit must leave no net payment behind.
          if (settlements[rid] != recredits[rid]) {
            ++s.settlement_mismatches;
            s.problems.push_back(fmt::format("{}: {} cancelled but not re-credited", id, rid));
          }
          continue;
        }
        ++live_confirmed;
        const int net = settlements[rid] - recredits[rid];
        if (settlements[rid] != 1 || net != 1) {
          ++s.settlement_mismatches;
          s.problems.push_back(fmt::format("{}: {} has {} settlements", id, rid, settlements[rid]));
        }
      }
    }
    const auto units = static_cast<int>(a->units.size());
    if (confirmed ? live_confirmed != units : live_confirmed != 0) {
      ++s.partial;
      s.problems.push_back(fmt::format("{}: {} of {} units confirmed after {}", id, live_confirmed, units,
                                       confirmed ? "success" : "failure"));
    }
    if (confirmed) {
      for (const auto& u : a->units) {
        if (settlements[u.reservation_id] != 1) {
          ++s.settlement_mismatches;
          s.problems.push_back(fmt::format("{}: unit {} has {} settlements", id, u.index, settlements[u.reservation_id]));
        }
      }
    }
    Money total;
    for (const auto& [_, b] : market.bank().balances()) total = total + b;
    if (total != Money{} || bank::replay(ledger) != market.bank().balances()) {
      ++s.unbalanced;
      s.problems.push_back(id + ": ledger not zero-sum");
    }
  }
  s.wall_seconds = clock.seconds();
  return s;
}

HoldTimeoutStudy hold_timeout_study(int trials, std::uint64_t seed) {
  HoldTimeoutStudy s;
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    ScenarioConfig cfg;
    cfg.name = "hold";
    cfg.system_start = table2_scenario().system_start;
    cfg.machines["Small"] = MachineSpec{"Small", 64, "", SyntheticLogSpec{rng(), 0.25, true, 0.25}};
    cfg.resources.push_back(ResourceSpec{"small1", "Small", 1000, Money::from_units(40), Money::from_units(25), {}});
    cfg.horizon = 2 * 86400;
    cfg.hold_timeout = Millis{5000 + static_cast<std::int64_t>(rng() % 115000)};
    cfg.sweep_interval = Millis{200 + static_cast<std::int64_t>(rng() % 4800)};
    cfg.timing = study_timing();
    auto memory = std::make_shared<runtime::MemoryTranscript>();
    Market market(cfg, {1, memory, std::nullopt});
    // The user's Confirm and its compensating Cancel never arrive.
    market.runtime().set_fault_filter([](const protocol::AclMessage& msg) {
      runtime::FaultDecision d;
      if (msg.sender == "user1" && (msg.performative == Performative::kConfirm ||
                                    msg.performative == Performative::kCancel))
        d.action = runtime::FaultAction::kDrop;
      return d;
    });
    market.advance(Millis{static_cast<std::int64_t>(rng() % 10000)});
    WorkloadSpec w;
    w.name = "hold";
    w.cores = 8 + static_cast<std::int64_t>(rng() % 24);
    w.price = Money::from_units(50);
    w.start_delay = 600;
    w.rounds = 1;
    const auto id = market.start_auction(0, workload_rfq(w, market.runtime().now(), fmt::format("hold-{}", trial + 1)),
                                         market.auction_config(1));
    market.run_auction(0, id);
    market.advance(cfg.hold_timeout + cfg.sweep_interval * 2);
    ++s.trials;

    std::optional<std::int64_t> agreed_at, expired_at;
    std::string rid;
    for (const auto& r : memory->records()) {
      const auto kind = r.value("kind", "");
      if (kind == "agree" && !agreed_at) {
        agreed_at = r.at("t").get<std::int64_t>();
        rid = r.at("reservation_id").get<std::string>();
      } else if (kind == "hold_expired" && r.value("reservation_id", "") == rid) {
        expired_at = r.at("t").get<std::int64_t>();
      }
    }
    if (!agreed_at || !expired_at) {
      s.problems.push_back(fmt::format("trial {}: agree={} expired={}", trial + 1, agreed_at.has_value(),
                                       expired_at.has_value()));
      continue;
    }
    auto* resource = market.resource("small1");
    const auto* rec = resource->queue().find(rid);
    const Millis elapsed(*expired_at - *agreed_at);
    const Millis bound = cfg.hold_timeout + cfg.sweep_interval;
    s.worst_lateness = std::max(s.worst_lateness, elapsed - cfg.hold_timeout);
    if (elapsed <= bound && rec && !rec->occupies()) {
      ++s.freed_in_time;
    } else {
      s.problems.push_back(fmt::format("trial {}: freed after {} ms, bound {} ms", trial + 1, elapsed.count(),
                                       bound.count()));
    }
  }
  return s;
}

BelowFloorStudy below_floor_study(const ScenarioConfig& base, Money request_price) {
  BelowFloorStudy s;
  auto w = find_workload(base, "exp1");
  w.price = request_price;
  w.rounds = 3;
  {
    auto cfg = base;
    cfg.approval = agents::ApprovalMode::kAuto;
    cfg.user_funds = Money{};
    Market market(cfg, {1, nullptr, std::nullopt});
    const auto id = market.start_auction(0, workload_rfq(w, market.runtime().now(), "below-auto"),
                                         market.auction_config(w.rounds));
    market.run_auction(0, id);
    market.advance(cfg.hold_timeout * 2);
    const auto* a = market.user().auction(id);
    s.auto_outcome = a->phase == agents::AuctionPhase::kDone     ? "AllConfirmed"
                     : a->phase == agents::AuctionPhase::kFailed ? "Failed"
                                                                 : "Open";
    s.auto_ledger_entries = market.bank().entries().size();
  }
  {
    auto cfg = base;
    cfg.approval = agents::ApprovalMode::kManualAll;
    Market market(cfg, {1, nullptr, std::nullopt});
    const auto id = market.start_auction(0, workload_rfq(w, market.runtime().now(), "below-manual"),
                                         market.auction_config(w.rounds));
    market.run_auction(0, id);
    const auto* a = market.user().auction(id);
    if (a->phase == agents::AuctionPhase::kAwaitingApproval && a->units.at(0).pending_approval) {
      const auto& o = a->units.at(0).pending_approval->offer;
      s.manual_pending = true;
      s.manual_price = o.price;
      s.manual_meets_requirements = o.meets_requirements;
      s.manual_resource = o.resource_id;
    }
  }
  return s;
}

json to_json(const RoundsStudy& s) {
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"rounds", r.rounds},
                    {"mean_sale_price", r.mean_sale_price},
                    {"mean_duration_s", r.mean_duration_s},
                    {"auctions", r.auctions}});
  return {{"rows", rows},
          {"duration_fit", fit_json(s.duration_fit)},
          {"price_non_increasing", s.price_non_increasing},
          {"plateau", s.plateau},
          {"plateau_spread", s.plateau_spread},
          {"offers", offers_json(s.offers)},
          {"wall_seconds", s.wall_seconds}};
}

json to_json(const WinnerStudy& s) {
  json misses = json::array();
  for (const auto& [id, w, rank] : s.misses) misses.push_back({{"auction_id", id}, {"winner", w}, {"rank", rank}});
  return {{"auctions", s.auctions}, {"won", s.won},         {"within_top3", s.within_top3},
          {"misses", misses},       {"winners", s.winners}, {"offers", offers_json(s.offers)},
          {"wall_seconds", s.wall_seconds}};
}

json to_json(const UnitsStudy& s) {
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"units", r.units}, {"round_span_s", r.round_span_s}, {"finalize_s", r.finalize_s},
                    {"auctions", r.auctions}});
  return {{"rows", rows},
          {"span_fit", fit_json(s.span_fit)},
          {"finalize_fit", fit_json(s.finalize_fit)},
          {"wall_seconds", s.wall_seconds}};
}

json to_json(const UsersStudy& s) {
  json rows = json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"users", r.users}, {"mean_response_ms", r.mean_response_ms}, {"responses", r.responses}});
  return {{"rows", rows}, {"fit", fit_json(s.fit)}, {"wall_seconds", s.wall_seconds}};
}

json to_json(const AtomicityStudy& s) {
  return {{"runs", s.runs},
          {"all_confirmed", s.all_confirmed},
          {"failed", s.failed},
          {"partial", s.partial},
          {"unbalanced", s.unbalanced},
          {"settlement_mismatches", s.settlement_mismatches},
          {"incomplete", s.incomplete},
          {"problems", s.problems},
          {"wall_seconds", s.wall_seconds}};
}

json to_json(const HoldTimeoutStudy& s) {
  return {{"trials", s.trials},
          {"freed_in_time", s.freed_in_time},
          {"worst_lateness_ms", s.worst_lateness.count()},
          {"problems", s.problems}};
}

json to_json(const BelowFloorStudy& s) {
  json j{{"auto_outcome", s.auto_outcome},
         {"auto_ledger_entries", s.auto_ledger_entries},
         {"manual_pending", s.manual_pending},
         {"manual_meets_requirements", s.manual_meets_requirements},
         {"manual_resource", s.manual_resource}};
  if (s.manual_price) j["manual_price"] = s.manual_price->to_string();
  return j;
}

}  // namespace ramp::harness
