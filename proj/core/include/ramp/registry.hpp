#pragma once

#include "ramp/time.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace ramp::harness {

struct RegistryEntry {
  std::string resource_id;
  std::string address;
  Timestamp last_heartbeat{};
  bool alive = false;
};

/// Where resource agents announce themselves.
class RegistrySink {
 public:
  virtual ~RegistrySink() = default;
  virtual void heartbeat(const std::string& resource_id, const std::string& address, Timestamp now) = 0;
};

/// Where user agents look resources up.
class ResourceDirectory {
 public:
  virtual ~ResourceDirectory() = default;
  /// Resource ids considered alive at `now`, sorted.
  virtual std::vector<RegistryEntry> alive(Timestamp now) const = 0;
};

/// Membership by heartbeat: an entry is alive while its last heartbeat is
/// within three heartbeat intervals. Thread-safe.
class Registry final : public RegistrySink, public ResourceDirectory {
 public:
  explicit Registry(Millis heartbeat_interval = Millis{5000}) : interval_(heartbeat_interval) {}

  Millis heartbeat_interval() const { return interval_; }

  /// Registration and heartbeat are the same operation; a new address supersedes the old one.
  void heartbeat(const std::string& resource_id, const std::string& address, Timestamp now) override;
  void remove(const std::string& resource_id);
  std::vector<RegistryEntry> alive(Timestamp now) const override;
  /// Every entry ever registered, with liveness evaluated at `now`.
  std::vector<RegistryEntry> entries(Timestamp now) const;

  /// Handles one request of the registry wire protocol:
  /// {"op":"register"|"heartbeat","resource_id","address"} -> {"ok":true}
  /// {"op":"list"} -> {"entries":[...]}
  nlohmann::json handle(const nlohmann::json& request, Timestamp now);

 private:
  bool is_alive(const RegistryEntry& e, Timestamp now) const { return now - e.last_heartbeat <= 3 * interval_; }

  Millis interval_;
  mutable std::mutex mu_;
  std::map<std::string, RegistryEntry> entries_;
};

nlohmann::json registry_entry_to_json(const RegistryEntry& e);
RegistryEntry registry_entry_from_json(const nlohmann::json& j);

}  // namespace ramp::harness
