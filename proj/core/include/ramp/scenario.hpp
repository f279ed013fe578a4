#pragma once

#include "ramp/bank.hpp"
#include "ramp/registry.hpp"
#include "ramp/resource_agent.hpp"
#include "ramp/sim_runtime.hpp"
#include "ramp/swf.hpp"
#include "ramp/user_agent.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ramp::harness {

/// Parameters for a generated PWA-style log.
struct SyntheticLogSpec {
  std::uint64_t seed = 1;
  /// Target mean fraction of cores held by log jobs.
  double load = 0.6;
  /// Hold exactly `load` for the whole window instead of a random job mix.
  bool constant = false;
  /// Largest job as a fraction of the machine.
  double max_job_fraction = 0.25;
};

struct MachineSpec {
  std::string name;
  std::int64_t cores = 0;
  /// Either a log file or a generator spec.
  std::string log_path;
  std::optional<SyntheticLogSpec> synthetic;
};

struct ResourceSpec {
  std::string name;
  std::string base;
  std::int64_t offset = 0;
  Money start_price;
  Money min_price;
  /// Overrides the machine's generator spec (controlled-load experiments).
  std::optional<SyntheticLogSpec> synthetic;
};

struct WorkloadSpec {
  std::string name;
  std::int64_t cores = 0;
  std::int64_t start_delay = 0;
  Money price;
  std::int64_t wall_time = 3600;
  int rounds = 3;
  /// Deadline measured from submission: start_delay + this.
  std::int64_t deadline_window = 86400;
  int units = 1;
};

/// A market set up in the shape of Tables 1-3.
struct ScenarioConfig {
  std::string name = "scenario";
  Timestamp system_start{};
  std::map<std::string, MachineSpec> machines;
  std::vector<ResourceSpec> resources;
  std::vector<WorkloadSpec> workloads;
  int repetitions = 1;
  Millis round_interval{15000};
  /// Virtual time between consecutive workloads.
  Millis workload_gap{60000};
  std::int64_t anticipated_rounds = 3;
  Millis hold_timeout{60000};
  Millis sweep_interval{1000};
  agents::ApprovalMode approval = agents::ApprovalMode::kAuto;
  pricing::DecrementFormula formula = pricing::DecrementFormula::kLoadScaled;
  runtime::TimingModel timing;
  /// Length of generated logs after each resource's offset.
  std::int64_t horizon = 7 * 86400;
  Money user_funds = Money::from_units(10'000'000);
  std::uint64_t seed = 1;

  /// Relative log paths resolve against `base_dir`.
  static ScenarioConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static ScenarioConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

/// Handling costs used by the bundled scenarios: a CFP costs a queue
/// snapshot, everything else is cheap bookkeeping.
runtime::TimingModel study_timing();

/// The Table 2 resource set and Table 1 machines (synthetic logs).
ScenarioConfig table2_scenario();
/// The thirteen Table 3 workloads.
std::vector<WorkloadSpec> table3_workloads();

/// Generates a log whose jobs cover [from, to) of log time.
queuesim::SwfLog synthetic_log(const SyntheticLogSpec& spec, std::int64_t cores, std::int64_t from, std::int64_t to);

/// Builds the RFQ for one workload submitted at `now`.
rfql::RfqDocument workload_rfq(const WorkloadSpec& w, Timestamp now, const std::string& document_id);

/// One simulated market place: registry, bank, resources, and users in a SimRuntime.
class Market {
 public:
  struct Options {
    int users = 1;
    std::shared_ptr<runtime::TranscriptSink> transcript;
    /// Start of virtual time; defaults to the scenario's system_start.
    std::optional<Timestamp> start;
  };

  Market(const ScenarioConfig& config, Options options);

  runtime::SimRuntime& runtime() { return *runtime_; }
  Registry& registry() { return *registry_; }
  bank::Bank& bank() { return *bank_; }
  const ScenarioConfig& config() const { return config_; }
  const std::vector<agents::ResourceAgent*>& resources() const { return resources_; }
  agents::ResourceAgent* resource(const std::string& id) const;
  const std::vector<agents::UserAgent*>& users() const { return users_; }
  agents::UserAgent& user(std::size_t i = 0) { return *users_.at(i); }
  signing::KeyRing& keys() { return *keys_; }

  agents::AuctionConfig auction_config(int rounds) const;
  /// Starts an auction on the user's loop now and returns its id.
  std::string start_auction(std::size_t user, rfql::RfqDocument doc, agents::AuctionConfig cfg);
  /// Runs until the auction is closed or awaits approval; returns false on the time limit.
  bool run_auction(std::size_t user, const std::string& auction_id, Millis limit = Millis{3600000});
  /// Advances virtual time.
  void advance(Millis d);

 private:
  ScenarioConfig config_;
  std::unique_ptr<runtime::SimRuntime> runtime_;
  std::shared_ptr<Registry> registry_;
  std::shared_ptr<signing::KeyRing> keys_;
  std::shared_ptr<bank::Bank> bank_;
  std::vector<agents::ResourceAgent*> resources_;
  std::vector<agents::UserAgent*> users_;
};

/// Builds a machine for one resource (loading or generating its log).
std::unique_ptr<queuesim::MachineModel> build_machine(const ScenarioConfig& config, const ResourceSpec& resource,
                                                      Timestamp system_start);

struct ScenarioRun {
  std::vector<nlohmann::json> records;
  /// Ledger after the run.
  std::vector<bank::LedgerEntry> ledger;
};

/// Runs every workload `repetitions` times, sequentially, in one market.
/// `pace` > 0 runs against the wall clock at that many virtual seconds per second.
ScenarioRun run_scenario(const ScenarioConfig& config, std::shared_ptr<runtime::TranscriptSink> extra_sink = nullptr,
                         double pace = 0);

}  // namespace ramp::harness
