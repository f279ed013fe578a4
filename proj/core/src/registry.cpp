#include "ramp/registry.hpp"

#include "ramp/error.hpp"

#include <nlohmann/json.hpp>

namespace ramp::harness {

void Registry::heartbeat(const std::string& resource_id, const std::string& address, Timestamp now) {
  if (resource_id.empty()) throw Error("registry: empty resource id");
  std::lock_guard lock(mu_);
  auto& e = entries_[resource_id];
  e.resource_id = resource_id;
  e.address = address;
  e.last_heartbeat = now;
}

void Registry::remove(const std::string& resource_id) {
  std::lock_guard lock(mu_);
  entries_.erase(resource_id);
}

std::vector<RegistryEntry> Registry::alive(Timestamp now) const {
  std::vector<RegistryEntry> out;
  for (auto& e : entries(now))
    if (e.alive) out.push_back(std::move(e));
  return out;
}

std::vector<RegistryEntry> Registry::entries(Timestamp now) const {
  std::lock_guard lock(mu_);
  std::vector<RegistryEntry> out;
  out.reserve(entries_.size());
  for (const auto& [id, e] : entries_) {
    auto copy = e;
    copy.alive = is_alive(e, now);
    out.push_back(std::move(copy));
  }
  return out;
}

nlohmann::json Registry::handle(const nlohmann::json& request, Timestamp now) {
  const auto op = request.value("op", "");
  if (op == "register" || op == "heartbeat") {
    if (!request.contains("resource_id") || !request["resource_id"].is_string()) {
      return {{"ok", false}, {"error", "missing resource_id"}};
    }
    heartbeat(request.at("resource_id").get<std::string>(), request.value("address", ""), now);
    return {{"ok", true}};
  }
  if (op == "list") {
    auto list = nlohmann::json::array();
    for (const auto& e : alive(now)) list.push_back(registry_entry_to_json(e));
    return {{"entries", list}};
  }
  return {{"ok", false}, {"error", "unknown op '" + op + "'"}};
}

nlohmann::json registry_entry_to_json(const RegistryEntry& e) {
  return {{"resource_id", e.resource_id},
          {"address", e.address},
          {"last_heartbeat", to_epoch_ms(e.last_heartbeat)},
          {"alive", e.alive}};
}

RegistryEntry registry_entry_from_json(const nlohmann::json& j) {
  RegistryEntry e;
  e.resource_id = j.at("resource_id").get<std::string>();
  e.address = j.value("address", "");
  e.last_heartbeat = from_epoch_ms(j.value("last_heartbeat", std::int64_t{0}));
  e.alive = j.value("alive", true);
  return e;
}

}  // namespace ramp::harness
