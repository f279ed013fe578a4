#pragma once

#include "ramp/metrics.hpp"
#include "ramp/scenario.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace ramp::harness {

/// Gives every resource a constant synthetic load drawn from [lo, hi].
void control_loads(ScenarioConfig& config, std::uint64_t seed, double lo = 0.1, double hi = 0.9);

struct OfferBoundReport {
  std::size_t offers = 0;
  std::size_t bound_violations = 0;
  std::size_t monotonic_violations = 0;
  std::optional<double> median_ratio;
};
/// mp <= offer <= current request for conforming offers, and per-resource
/// offers non-increasing across the rounds of one auction unit.
OfferBoundReport check_offer_bounds(const Metrics& m);

struct RoundsStudy {
  std::vector<RoundsRow> rows;
  LinearFit duration_fit;
  bool price_non_increasing = false;
  bool plateau = false;
  double plateau_spread = 0;
  OfferBoundReport offers;
  double wall_seconds = 0;
};
/// Every workload with N = 1..max_rounds rounds, `reps` times each.
RoundsStudy rounds_study(const ScenarioConfig& base, int max_rounds = 10, int reps = 3);

struct WinnerStudy {
  int auctions = 0;
  int won = 0;
  int within_top3 = 0;
  /// auction id, winner, rank by attractiveness in the winning round.
  std::vector<std::tuple<std::string, std::string, int>> misses;
  std::map<std::string, int> winners;
  OfferBoundReport offers;
  double wall_seconds = 0;
};
WinnerStudy winner_study(const ScenarioConfig& base, int reps = 3, std::uint64_t load_seed = 7);

struct UnitsRow {
  int units = 0;
  double round_span_s = 0;
  double finalize_s = 0;
  int auctions = 0;
};
struct UnitsStudy {
  std::vector<UnitsRow> rows;
  LinearFit span_fit;
  LinearFit finalize_fit;
  double wall_seconds = 0;
};
UnitsStudy units_study(const ScenarioConfig& base, int max_units = 10, int reps = 3);

struct UsersRow {
  int users = 0;
  double mean_response_ms = 0;
  int responses = 0;
};
struct UsersStudy {
  std::vector<UsersRow> rows;
  LinearFit fit;
  double wall_seconds = 0;
};
UsersStudy users_study(const ScenarioConfig& base, int max_users = 10, int reps = 3);

struct AtomicityStudy {
  int runs = 0;
  int all_confirmed = 0;
  int failed = 0;
  int partial = 0;
  int unbalanced = 0;
  int settlement_mismatches = 0;
  int incomplete = 0;
  std::vector<std::string> problems;
  double wall_seconds = 0;
};
/// Randomized multi-unit auctions with Refuse and timeout faults injected on
/// Agree and Confirm messages between users and resources.
AtomicityStudy atomicity_study(int runs = 1000, std::uint64_t seed = 2024, double fault_rate = 0.15);

struct HoldTimeoutStudy {
  int trials = 0;
  int freed_in_time = 0;
  Millis worst_lateness{0};
  std::vector<std::string> problems;
};
/// A resource Agrees but never sees a Confirm or Cancel.
HoldTimeoutStudy hold_timeout_study(int trials = 100, std::uint64_t seed = 99);

struct BelowFloorStudy {
  std::string auto_outcome;
  std::size_t auto_ledger_entries = 0;
  bool manual_pending = false;
  std::optional<Money> manual_price;
  bool manual_meets_requirements = true;
  std::string manual_resource;
};
BelowFloorStudy below_floor_study(const ScenarioConfig& base, Money request_price = Money::from_units(20));

nlohmann::json to_json(const RoundsStudy& s);
nlohmann::json to_json(const WinnerStudy& s);
nlohmann::json to_json(const UnitsStudy& s);
nlohmann::json to_json(const UsersStudy& s);
nlohmann::json to_json(const AtomicityStudy& s);
nlohmann::json to_json(const HoldTimeoutStudy& s);
nlohmann::json to_json(const BelowFloorStudy& s);

}  // namespace ramp::harness
