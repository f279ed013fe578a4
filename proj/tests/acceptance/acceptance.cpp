// Prints one PASS/FAIL line per acceptance criterion.
//
// Exit status is 0 when every failing criterion was named with --allow-fail,
// so a known, documented failure does not hide new ones.

#include "ramp/error.hpp"
#include "ramp/experiments.hpp"
#include "ramp/swf.hpp"

#include "ramp_test/queue_oracle.hpp"
#include "ramp_test/support.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>

namespace {

using namespace ramp;
using namespace ramp::harness;

struct Result {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Result()> run;
};

constexpr double kBudgetSeconds = 120;
constexpr double kReferenceMedianRatio = 0.711;

std::string budget(double s) { return fmt::format("{:.1f}s/{:.0f}s", s, kBudgetSeconds); }

// The offer-bound property is checked on every scenario run the other studies make;
// the rounds and winner studies cover the full bundled market at varied loads.
std::vector<OfferBoundReport> g_offer_reports;

Result rounds_curve() {
  const auto s = rounds_study(table2_scenario(), 10, 3);
  g_offer_reports.push_back(s.offers);
  std::string prices;
  for (const auto& r : s.rows) prices += fmt::format("{}{:.2f}", prices.empty() ? "" : ",", r.mean_sale_price);
  const bool pass = s.duration_fit.r2 > 0.99 && s.price_non_increasing && s.plateau && s.wall_seconds < kBudgetSeconds;
  return {pass, fmt::format("R2={:.4f} slope={:.2f}s/round non-increasing(1..6)={} plateau-spread={:.1f}% "
                            "prices=[{}] time={}",
                            s.duration_fit.r2, s.duration_fit.slope, s.price_non_increasing, 100 * s.plateau_spread,
                            prices, budget(s.wall_seconds))};
}

Result winner_concentration() {
  const auto s = winner_study(table2_scenario(), 3);
  g_offer_reports.push_back(s.offers);
  std::string misses;
  for (const auto& [auction, winner, rank] : s.misses) {
    misses += fmt::format(" {}:{}@rank{}", auction, winner, rank);
  }
  const bool pass = s.auctions == 39 && s.within_top3 == s.auctions && s.wall_seconds < kBudgetSeconds;
  return {pass, fmt::format("{}/{} winners in top-3 (won {}) time={}{}", s.within_top3, s.auctions, s.won,
                            budget(s.wall_seconds), misses.empty() ? "" : " misses:" + misses)};
}

Result offer_bounds() {
  if (g_offer_reports.empty()) {
    g_offer_reports.push_back(check_offer_bounds(compute_metrics(run_scenario(table2_scenario()).records)));
  }
  std::size_t offers = 0, bound = 0, monotonic = 0;
  std::vector<double> medians;
  for (const auto& r : g_offer_reports) {
    offers += r.offers;
    bound += r.bound_violations;
    monotonic += r.monotonic_violations;
    if (r.median_ratio) medians.push_back(*r.median_ratio);
  }
  const bool pass = offers > 0 && bound == 0 && monotonic == 0;
  std::string ratio = "n/a";
  if (!medians.empty()) {
    ratio = fmt::format("{:.1f}%", 100 * medians.front());
    for (std::size_t i = 1; i < medians.size(); ++i) ratio += fmt::format("/{:.1f}%", 100 * medians[i]);
  }
  return {pass, fmt::format("{} offers, {} outside [mp, request], {} increases across rounds; "
                            "median offer/request {} (reference {:.1f}%, not asserted)",
                            offers, bound, monotonic, ratio, 100 * kReferenceMedianRatio)};
}

Result units_scaling() {
  const auto s = units_study(table2_scenario(), 10, 3);
  std::string rows;
  for (const auto& r : s.rows) rows += fmt::format(" U{}={:.2f}/{:.2f}s", r.units, r.round_span_s, r.finalize_s);
  const bool pass = s.span_fit.r2 > 0.95 && s.finalize_fit.slope < 3.0 && s.wall_seconds < kBudgetSeconds;
  return {pass, fmt::format("round-span R2={:.4f} finalize +{:.2f}s/unit time={} (span/finalize:{})", s.span_fit.r2,
                            s.finalize_fit.slope, budget(s.wall_seconds), rows)};
}

Result concurrent_users() {
  const auto s = users_study(table2_scenario(), 10, 3);
  if (s.rows.size() < 10) return {false, "study produced fewer than 10 rows"};
  const double t1 = s.rows.front().mean_response_ms, t10 = s.rows.back().mean_response_ms;
  const bool pass = t1 > 0 && t10 <= 12 * t1 && s.wall_seconds < kBudgetSeconds;
  return {pass, fmt::format("t(1)={:.1f}ms t(10)={:.1f}ms ratio={:.2f} (limit 12) fit slope={:.1f}ms/user R2={:.3f} "
                            "time={}",
                            t1, t10, t10 / t1, s.fit.slope, s.fit.r2, budget(s.wall_seconds))};
}

Result atomicity() {
  const auto s = atomicity_study(1000);
  const bool pass = s.runs == 1000 && s.partial == 0 && s.unbalanced == 0 && s.settlement_mismatches == 0 &&
                    s.incomplete == 0;
  std::string problems;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, s.problems.size()); ++i) problems += " " + s.problems[i];
  return {pass, fmt::format("{} runs: {} all-confirmed, {} failed cleanly, {} partial, {} not zero-sum, "
                            "{} settlement mismatches, {} unfinished time={:.1f}s{}",
                            s.runs, s.all_confirmed, s.failed, s.partial, s.unbalanced, s.settlement_mismatches,
                            s.incomplete, s.wall_seconds, problems)};
}

Result queue_oracle() {
  std::mt19937_64 rng(722);
  auto num = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  int checks = 0;
  for (int c = 0; c < 500; ++c) {
    const auto qc = testing::random_queue_case(rng, 200, 64);
    auto m = testing::machine(qc.cores, qc.jobs);
    testing::QueueOracle oracle{qc.cores, {}};
    for (const auto& j : qc.jobs) oracle.add_job(j);
    for (int op = 0; op < 12; ++op) {
      const std::int64_t at = num(0, 2600), cores = num(1, qc.cores + 2), dur = num(1, 300);
      const auto got = m.availability(at, cores, dur);
      const auto want = oracle.query(at, cores, dur);
      ++checks;
      if (got.feasible != want.feasible || std::abs(got.load_fraction() - want.load) > 1e-9) {
        return {false, fmt::format("case {} snapshot at={} cores={} dur={}: model ({}, {:.12f}) oracle ({}, {:.12f})", c,
                                   at, cores, dur, got.feasible, got.load_fraction(), want.feasible, want.load)};
      }
      // Every other query becomes a reservation attempt, which must agree with the oracle too.
      if (op % 2 == 0) {
        const auto id = m.reserve(at, cores, dur);
        ++checks;
        if (id.has_value() != want.feasible) {
          return {false, fmt::format("case {} reserve at={} cores={} dur={}: model {} oracle {}", c, at, cores, dur,
                                     id.has_value(), want.feasible)};
        }
        if (id) {
          oracle.busy.push_back({at, at + dur, cores});
          if (num(0, 3) == 0) {
            m.cancel(*id);
            oracle.busy.pop_back();
          }
        }
      }
    }
    const std::int64_t from = num(0, 2000), latest = from + num(0, 600), cores = num(1, qc.cores), dur = num(1, 200);
    ++checks;
    if (m.earliest_feasible_start(from, latest, cores, dur) != oracle.earliest(from, latest, cores, dur)) {
      return {false, fmt::format("case {} earliest start from={} latest={} differs", c, from, latest)};
    }
  }
  return {true, fmt::format("500 cases, {} snapshot/reservation/earliest-start checks agree (load within 1e-9)", checks)};
}

Result hold_timeout() {
  const auto s = hold_timeout_study(100);
  return {s.trials == 100 && s.freed_in_time == 100,
          fmt::format("{}/{} holds freed within hold_timeout + one sweep (worst lateness {}ms){}", s.freed_in_time,
                      s.trials, s.worst_lateness.count(), s.problems.empty() ? "" : " first problem: " + s.problems[0])};
}

Result swf_fidelity() {
  const auto sample = queuesim::parse_swf(testing::read_file(testing::testdata("swf/pwa_sample_50.swf")));
  const auto again = queuesim::parse_swf(queuesim::serialize_swf(sample));
  const bool identity = sample.jobs.size() == 50 && again == sample;
  int cases = 0, rejected = 0;
  std::vector<std::string> accepted;
  for (const auto& e : std::filesystem::directory_iterator(testing::testdata("swf/malformed"))) {
    ++cases;
    try {
      queuesim::parse_swf(testing::read_file(e.path().string()));
      accepted.push_back(e.path().filename().string());
    } catch (const ParseError&) {
      ++rejected;
    }
  }
  std::string bad;
  for (const auto& a : accepted) bad += " " + a;
  return {identity && cases > 0 && rejected == cases,
          fmt::format("{}-job round trip {}; {}/{} malformed files rejected{}", sample.jobs.size(),
                      identity ? "identical" : "DIFFERS", rejected, cases, bad.empty() ? "" : " accepted:" + bad)};
}

Result below_floor() {
  const auto s = below_floor_study(table2_scenario());
  const bool pass = s.auto_outcome == "Failed" && s.auto_ledger_entries == 0 && s.manual_pending && s.manual_price &&
                    *s.manual_price == Money::from_units(25) && !s.manual_meets_requirements;
  return {pass, fmt::format("auto: {} with {} ledger entries; manual: {} best offer {} from {}", s.auto_outcome,
                            s.auto_ledger_entries, s.manual_pending ? "pending" : "not pending",
                            s.manual_price ? s.manual_price->to_string() : "none", s.manual_resource)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<std::string> allow_fail, only;
  app.add_option("--allow-fail", allow_fail, "criteria whose failure is known and documented");
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);

  // Order matters: the offer-bound line aggregates the runs of the two studies before it.
  const std::vector<Criterion> criteria{
      {"rounds-curve", rounds_curve},
      {"winner-concentration", winner_concentration},
      {"offer-bounds", offer_bounds},
      {"units-scaling", units_scaling},
      {"concurrent-users", concurrent_users},
      {"2pc-atomicity", atomicity},
      {"queue-oracle", queue_oracle},
      {"hold-timeout", hold_timeout},
      {"swf-fidelity", swf_fidelity},
      {"below-floor", below_floor},
  };
  const std::set<std::string> allowed(allow_fail.begin(), allow_fail.end());
  const std::set<std::string> selected(only.begin(), only.end());

  int unexpected = 0, failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.name)) continue;
    Result r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    const bool known = !r.pass && allowed.count(c.name);
    std::cout << (r.pass ? "PASS" : "FAIL") << ' ' << c.name << ": " << r.detail
              << (known ? " [known failure]" : "") << std::endl;
    if (!r.pass) {
      ++failed;
      if (!known) ++unexpected;
    }
  }
  std::cout << fmt::format("{} criteria failed ({} unexpected)", failed, unexpected) << std::endl;
  return unexpected == 0 ? 0 : 1;
}
