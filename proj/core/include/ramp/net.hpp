#pragma once

#include "ramp/registry.hpp"
#include "ramp/runtime.hpp"

#include <nlohmann/json.hpp>

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <thread>

namespace ramp::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// Accepts "host:port", ":port", "port", and an optional "tcp://" prefix.
  static Endpoint parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const Endpoint&) const = default;
};

/// Wall-clock runtime over TCP. Every hosted agent's callbacks run on one
/// I/O thread, so each agent still sees a serial event loop.
class NetRuntime {
 public:
  using Resolver = std::function<std::optional<Endpoint>(const std::string& agent_id)>;

  NetRuntime();
  ~NetRuntime();
  NetRuntime(const NetRuntime&) = delete;
  NetRuntime& operator=(const NetRuntime&) = delete;

  /// Hosts `agent`, listening on `listen` (port 0 picks a free port). Returns the bound endpoint.
  Endpoint add_agent(std::shared_ptr<runtime::Agent> agent, Endpoint listen);
  /// Static route to an agent hosted elsewhere.
  void add_peer(const std::string& agent_id, Endpoint at);
  /// Consulted for receivers that are neither hosted here nor static peers.
  void set_resolver(Resolver resolver);
  void set_transcript(std::shared_ptr<runtime::TranscriptSink> sink);

  /// Starts the I/O thread and runs every agent's on_start.
  void start();
  void stop();

  /// Thread-safe: runs `fn` on the agent's loop.
  void invoke(const std::string& agent_id, std::function<void(runtime::Context&)> fn);

  /// Runs `fn` on the agent's loop and waits for its result; rethrows its exceptions.
  template <class F>
  auto call(const std::string& agent_id, F fn) -> decltype(fn(std::declval<runtime::Context&>())) {
    using R = decltype(fn(std::declval<runtime::Context&>()));
    auto promise = std::make_shared<std::promise<R>>();
    auto future = promise->get_future();
    invoke(agent_id, [promise, fn = std::move(fn)](runtime::Context& ctx) mutable {
      try {
        if constexpr (std::is_void_v<R>) {
          fn(ctx);
          promise->set_value();
        } else {
          promise->set_value(fn(ctx));
        }
      } catch (...) {
        promise->set_exception(std::current_exception());
      }
    });
    return future.get();
  }

  runtime::Agent* find_agent(const std::string& id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One registry wire-protocol request over a fresh connection.
/// Throws Error when the registry cannot be reached within `timeout`.
nlohmann::json registry_request(const Endpoint& registry, const nlohmann::json& request,
                                Millis timeout = Millis{2000});

/// Serves the registry wire protocol (length-prefixed JSON frames).
class RegistryServer {
 public:
  RegistryServer(std::shared_ptr<harness::Registry> registry, Endpoint listen);
  ~RegistryServer();
  RegistryServer(const RegistryServer&) = delete;
  RegistryServer& operator=(const RegistryServer&) = delete;

  Endpoint endpoint() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// A process-local view of a remote registry: heartbeats are queued and sent
/// from a background thread, and the alive list is refreshed periodically.
/// Failures back off and retry; callers never block on the network.
class RemoteRegistry final : public harness::RegistrySink, public harness::ResourceDirectory {
 public:
  explicit RemoteRegistry(Endpoint registry, Millis refresh = Millis{1000});
  ~RemoteRegistry() override;

  void heartbeat(const std::string& resource_id, const std::string& address, Timestamp now) override;
  std::vector<harness::RegistryEntry> alive(Timestamp now) const override;
  /// Endpoint from the last fetched list.
  std::optional<Endpoint> resolve(const std::string& resource_id) const;
  /// Fetches the list now; returns false when the registry is unreachable.
  bool refresh();

 private:
  void loop();

  Endpoint registry_;
  Millis refresh_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<nlohmann::json> pending_;
  std::vector<harness::RegistryEntry> cache_;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace ramp::net
