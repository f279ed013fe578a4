#pragma once

#include "ramp/error.hpp"
#include "ramp/money.hpp"
#include "ramp/time.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ramp::rfql {

/// One unit of a request for quotation. Term names follow the RFQL vocabulary;
/// units: CPUSpeed GHz, disk MB, RAMPerCore MB, InterNodeBandwidth Mbit/s,
/// WallTime seconds.
struct RfqRequest {
  int index = 0;

  std::optional<Money> cpu_hour_cost;
  std::optional<CalendarTime> deadline;        // EndDate + EndTime
  std::optional<CalendarTime> earliest_start;  // StartDate + StartTime
  std::optional<std::string> operating_system;
  std::optional<std::string> os_version;
  std::optional<std::string> architecture;
  std::optional<double> cpu_speed;
  std::optional<std::int64_t> wall_time;
  std::optional<std::int64_t> total_disk_space;
  std::optional<std::int64_t> node_disk_space;
  std::optional<std::int64_t> inter_node_bandwidth;
  std::optional<std::int64_t> ram_per_core;
  std::optional<std::int64_t> total_cores;
  std::optional<std::int64_t> node_count;
  std::optional<std::int64_t> node_cores;

  /// TotalCores, or NodeCount x NodeCores. 0 when neither form is complete.
  std::int64_t requested_cores() const;

  bool operator==(const RfqRequest&) const = default;
};

struct RfqDocument {
  std::string document_id;
  std::vector<RfqRequest> requests;

  bool operator==(const RfqDocument&) const = default;
};

/// Static description of a homogeneous machine partition.
struct ResourceProfile {
  std::string operating_system;
  std::string os_version;
  std::string architecture;
  double cpu_speed = 0;
  std::int64_t ram_per_core = 0;
  std::int64_t node_disk_space = 0;
  std::int64_t total_disk_space = 0;
  std::int64_t inter_node_bandwidth = 0;
  std::int64_t node_count = 0;
  std::int64_t node_cores = 0;

  std::int64_t total_cores() const { return node_count * node_cores; }

  bool operator==(const ResourceProfile&) const = default;
};

struct Violation {
  int request_index;
  std::string term;
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Thrown by parse_rfq when a document is well-formed XML but breaks the rules.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

inline constexpr const char* kRequiredAbsent = "required term absent";
inline constexpr const char* kMutuallyExclusive = "mutually exclusive";
inline constexpr const char* kNotPositive = "must be positive";
inline constexpr const char* kNegative = "must not be negative";
inline constexpr const char* kIncomplete = "incomplete term pair";
inline constexpr const char* kWindow = "deadline leaves no room for wall time";
inline constexpr const char* kDuplicateIndex = "duplicate request id";
inline constexpr const char* kEmptyDocument = "document has no requests";

/// Parses and validates an RFQL document.
/// Throws ParseError for malformed XML or unknown elements, ValidationError
/// for rule violations.
RfqDocument parse_rfq(const std::string& xml);

/// Canonical XML: terms in schema order, requests in document order.
std::string serialize_rfq(const RfqDocument& doc);

std::vector<Violation> validate_request(const RfqRequest& request);
/// Empty result iff every request satisfies the RFQL rules.
std::vector<Violation> validate_rfq(const RfqDocument& doc);

/// True iff every term present in the request is satisfied by the profile.
bool match_static(const ResourceProfile& profile, const RfqRequest& request);

/// Latest admissible start: deadline - wall_time.
std::optional<CalendarTime> latest_start(const RfqRequest& request);

/// JSON form used inside protocol messages; keys are the RFQL term names.
nlohmann::json request_to_json(const RfqRequest& request);
RfqRequest request_from_json(const nlohmann::json& j);

ResourceProfile profile_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const ResourceProfile& p);

}  // namespace ramp::rfql
