#pragma once

#include "ramp/net.hpp"
#include "ramp/scenario.hpp"
#include "ramp/user_agent.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

namespace ramp::harness {

/// What the ops API drives. Every user-agent access runs as one turn of the
/// agent's own loop, so responses are consistent snapshots.
class OpsBackend {
 public:
  using UserFn = std::function<void(agents::UserAgent&, runtime::Context&)>;

  virtual ~OpsBackend() = default;
  /// Runs `fn` on the user agent's loop and waits for it; rethrows its exceptions.
  virtual void with_user(UserFn fn) = 0;
  /// Balance statement, or nullopt for an unknown account.
  virtual std::optional<nlohmann::json> account(const std::string& id) = 0;
  /// Registry view with each resource's last attractiveness sample when known.
  virtual nlohmann::json resources() = 0;
};

/// Drives a simulated market whose virtual clock is paced against the wall
/// clock on a background thread.
class SimOpsBackend final : public OpsBackend {
 public:
  /// `speed` is virtual seconds per wall second.
  SimOpsBackend(std::shared_ptr<Market> market, double speed = 1.0, std::size_t user = 0);
  ~SimOpsBackend() override;

  void with_user(UserFn fn) override;
  std::optional<nlohmann::json> account(const std::string& id) override;
  nlohmann::json resources() override;

  Market& market() { return *market_; }
  void stop();

 private:
  /// Runs `fn` on the simulation thread between events.
  void on_loop(std::function<void()> fn);

  std::shared_ptr<Market> market_;
  std::size_t user_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

/// Drives a user agent hosted in a NetRuntime; balances come from the bank over the wire.
class NetOpsBackend final : public OpsBackend {
 public:
  NetOpsBackend(net::NetRuntime& runtime, std::string user_id, std::shared_ptr<net::RemoteRegistry> registry);

  void with_user(UserFn fn) override;
  std::optional<nlohmann::json> account(const std::string& id) override;
  nlohmann::json resources() override;

 private:
  net::NetRuntime& runtime_;
  std::string user_id_;
  std::shared_ptr<net::RemoteRegistry> registry_;
};

/// JSON-over-HTTP operations API served on a background thread.
class OpsApi {
 public:
  explicit OpsApi(std::shared_ptr<OpsBackend> backend);
  ~OpsApi();
  OpsApi(const OpsApi&) = delete;
  OpsApi& operator=(const OpsApi&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Parses a POST /auctions body: {"rfql": "<xml>", "config": {...}} or bare RFQL XML.
std::pair<rfql::RfqDocument, agents::AuctionConfig> parse_auction_request(const std::string& body,
                                                                          const std::string& content_type);

}  // namespace ramp::harness
