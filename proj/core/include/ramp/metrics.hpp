#pragma once

#include "ramp/money.hpp"
#include "ramp/time.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ramp::harness {

/// One proposal as logged by the resource that made it.
struct OfferSample {
  Timestamp t{};
  std::string resource;
  std::string auction_id;
  int unit = 0;
  int round = 0;
  Money requested;
  Money price;
  Money min_price;
  Money attractiveness;
  double load = 0;
  bool meets_requirements = true;
};

struct ResponseSample {
  std::string user;
  std::string resource;
  double ms = 0;
};

struct RoundMetrics {
  int round = 0;
  Money request_price;
  int offers = 0;
  std::optional<double> mean_offer;
  /// Round start to the last response of the round (all units).
  std::optional<Millis> response_span;
};

struct UnitOutcome {
  int unit = 0;
  std::string status;
  std::string resource;
  std::optional<Money> price;
};

struct AuctionMetrics {
  std::string auction_id;
  std::string user;
  int units = 0;
  int rounds = 0;
  Money request_price;
  std::vector<RoundMetrics> round_stats;
  std::string outcome;
  std::vector<UnitOutcome> unit_outcomes;
  Millis total{0};
  Millis finalize{0};
  bool complete = false;

  /// Mean winning price over confirmed units.
  std::optional<double> winning_price() const;
  /// Winner of unit 0, if confirmed.
  std::string winner() const;
};

struct RoundsRow {
  int rounds = 0;
  double mean_sale_price = 0;
  double mean_duration_s = 0;
  int auctions = 0;
};

struct Metrics {
  std::vector<AuctionMetrics> auctions;
  std::vector<OfferSample> offers;
  /// CFP sent to proposal received, per response, in ms.
  std::vector<ResponseSample> responses;
  std::size_t incomplete = 0;

  /// Median of offer price / the auction's original request price over conforming offers.
  std::optional<double> median_offer_ratio() const;
  /// Table 4 shape: mean sale price and duration per configured round count (complete, confirmed auctions).
  std::vector<RoundsRow> by_rounds() const;
  std::map<std::string, int> winner_counts() const;
  std::optional<double> mean_response_ms() const;
};

/// Deterministic aggregation of transcript records. Auctions without a
/// finishing record are counted in `incomplete` and left out of aggregates.
Metrics compute_metrics(const std::vector<nlohmann::json>& records);

/// Reads every *.jsonl file in a directory and merges the records by time.
/// Unparseable lines (e.g. a truncated final line) are skipped.
std::vector<nlohmann::json> read_transcripts(const std::string& dir);

/// Writes one CSV per figure into `dir` and returns the file names written.
std::vector<std::string> write_csvs(const Metrics& m, const std::string& dir);

/// Ordinary least squares fit y = a + b x.
struct LinearFit {
  double intercept = 0;
  double slope = 0;
  double r2 = 0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ramp::harness
