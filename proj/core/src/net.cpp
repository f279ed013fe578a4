#include "ramp/net.hpp"

#include "ramp/error.hpp"
#include "ramp/protocol.hpp"

#include <boost/asio.hpp>
#include <fmt/format.h>

#include <array>
#include <map>
#include <set>
#include <unordered_map>

namespace ramp::net {

namespace asio = boost::asio;
using asio::ip::tcp;
using protocol::AclMessage;

Endpoint Endpoint::parse(const std::string& text) {
  std::string s = text;
  if (s.rfind("tcp://", 0) == 0) s = s.substr(6);
  Endpoint e;
  const auto colon = s.rfind(':');
  std::string port = s;
  if (colon != std::string::npos) {
    if (colon > 0) e.host = s.substr(0, colon);
    port = s.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(p);
  } catch (const std::exception&) {
    throw ConfigError("bad address '" + text + "'");
  }
  return e;
}

std::string Endpoint::to_string() const { return fmt::format("{}:{}", host, port); }

namespace {

Timestamp wall_now() { return std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now()); }

tcp::endpoint to_asio(asio::io_context& io, const Endpoint& e) {
  boost::system::error_code ec;
  auto addr = asio::ip::make_address(e.host, ec);
  if (!ec) return {addr, e.port};
  tcp::resolver resolver(io);
  auto results = resolver.resolve(e.host, std::to_string(e.port));
  return *results.begin();
}

}  // namespace

// ---------------------------------------------------------------------------

struct NetRuntime::Impl {
  class Ctx;
  struct Hosted {
    std::shared_ptr<runtime::Agent> agent;
    std::unique_ptr<tcp::acceptor> acceptor;
    Endpoint endpoint;
    std::uint64_t next_message = 1;
  };
  struct Outgoing {
    explicit Outgoing(asio::io_context& io) : socket(io) {}
    tcp::socket socket;
    Endpoint endpoint;
    std::deque<std::pair<std::shared_ptr<std::vector<std::uint8_t>>, AclMessage>> queue;
    bool connected = false;
    bool connecting = false;
    bool writing = false;
  };
  struct Session : std::enable_shared_from_this<Session> {
    explicit Session(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    std::array<std::uint8_t, 8192> chunk{};
    protocol::FrameBuffer buffer;
  };

  asio::io_context io;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::thread thread;
  std::unordered_map<std::string, Hosted> agents;
  std::map<std::string, Endpoint> peers;
  /// Return routes learned from inbound messages.
  std::map<std::string, Endpoint> learned;
  Resolver resolver;
  std::shared_ptr<runtime::TranscriptSink> transcript;
  std::map<std::string, std::shared_ptr<Outgoing>> outgoing;
  std::map<runtime::TimerId, std::unique_ptr<asio::steady_timer>> timers;
  runtime::TimerId next_timer = 1;
  bool started = false;

  void record(const std::string& agent, nlohmann::json event) {
    if (!transcript) return;
    event["t"] = to_epoch_ms(wall_now());
    event["agent"] = agent;
    transcript->write(event);
  }

  std::string send(const std::string& from, AclMessage msg);
  void deliver(const AclMessage& msg);
  void undeliverable(const AclMessage& msg);
  void write_next(const std::shared_ptr<Outgoing>& out);
  void fail_outgoing(const std::shared_ptr<Outgoing>& out);
  void accept(Hosted& h);
  void read(const std::shared_ptr<Session>& s);
  runtime::TimerId set_timer(const std::string& agent, Millis delay, std::string tag);
};

class NetRuntime::Impl::Ctx final : public runtime::Context {
 public:
  Ctx(Impl& rt, std::string id) : rt_(rt), id_(std::move(id)) {}
  Timestamp now() const override { return wall_now(); }
  const std::string& self() const override { return id_; }
  std::string send(AclMessage msg) override { return rt_.send(id_, std::move(msg)); }
  runtime::TimerId set_timer(Millis delay, std::string tag) override { return rt_.set_timer(id_, delay, std::move(tag)); }
  void cancel_timer(runtime::TimerId id) override {
    if (auto it = rt_.timers.find(id); it != rt_.timers.end()) {
      it->second->cancel();
      rt_.timers.erase(it);
    }
  }
  void record(nlohmann::json event) override { rt_.record(id_, std::move(event)); }

 private:
  Impl& rt_;
  std::string id_;
};

std::string NetRuntime::Impl::send(const std::string& from, AclMessage msg) {
  auto& h = agents.at(from);
  msg.sender = from;
  msg.message_id = fmt::format("{}-{:08d}", from, h.next_message++);
  msg.sent_at = wall_now();
  const auto id = msg.message_id;

  if (agents.count(msg.receiver)) {
    asio::post(io, [this, msg] { deliver(msg); });
    return id;
  }
  std::optional<Endpoint> ep;
  if (auto p = peers.find(msg.receiver); p != peers.end()) ep = p->second;
  if (!ep && resolver) ep = resolver(msg.receiver);
  if (!ep) {
    if (auto l = learned.find(msg.receiver); l != learned.end()) ep = l->second;
  }
  if (!ep) {
    asio::post(io, [this, msg] { undeliverable(msg); });
    return id;
  }
  msg.sender_address = h.endpoint.to_string();
  std::shared_ptr<std::vector<std::uint8_t>> frame;
  try {
    frame = std::make_shared<std::vector<std::uint8_t>>(protocol::encode_message(msg));
  } catch (const ProtocolError&) {
    asio::post(io, [this, msg] { undeliverable(msg); });
    return id;
  }
  auto& out = outgoing[ep->to_string()];
  if (!out) {
    out = std::make_shared<Outgoing>(io);
    out->endpoint = *ep;
  }
  out->queue.emplace_back(frame, msg);
  if (out->connected) {
    write_next(out);
  } else if (!out->connecting) {
    out->connecting = true;
    tcp::endpoint target;
    try {
      target = to_asio(io, out->endpoint);
    } catch (const std::exception&) {
      asio::post(io, [this, out] { fail_outgoing(out); });
      return id;
    }
    out->socket.async_connect(target, [this, out](const boost::system::error_code& ec) {
      out->connecting = false;
      if (ec) return fail_outgoing(out);
      out->connected = true;
      boost::system::error_code ignored;
      out->socket.set_option(tcp::no_delay(true), ignored);
      write_next(out);
    });
  }
  return id;
}

void NetRuntime::Impl::write_next(const std::shared_ptr<Outgoing>& out) {
  if (out->writing || out->queue.empty()) return;
  out->writing = true;
  auto frame = out->queue.front().first;
  asio::async_write(out->socket, asio::buffer(*frame),
                    [this, out, frame](const boost::system::error_code& ec, std::size_t) {
                      out->writing = false;
                      if (ec) return fail_outgoing(out);
                      out->queue.pop_front();
                      write_next(out);
                    });
}

void NetRuntime::Impl::fail_outgoing(const std::shared_ptr<Outgoing>& out) {
  boost::system::error_code ignored;
  out->socket.close(ignored);
  auto queue = std::move(out->queue);
  out->queue.clear();
  if (auto it = outgoing.find(out->endpoint.to_string()); it != outgoing.end() && it->second == out) outgoing.erase(it);
  for (auto& [_, msg] : queue) undeliverable(msg);
}

void NetRuntime::Impl::undeliverable(const AclMessage& msg) {
  auto it = agents.find(msg.sender);
  if (it == agents.end()) return;
  Ctx ctx(*this, msg.sender);
  it->second.agent->on_undeliverable(msg, ctx);
}

void NetRuntime::Impl::deliver(const AclMessage& msg) {
  auto it = agents.find(msg.receiver);
  if (it == agents.end()) return;
  record(msg.receiver, {{"kind", "message"}, {"message", protocol::message_to_json(msg)}});
  Ctx ctx(*this, msg.receiver);
  it->second.agent->on_message(msg, ctx);
}

runtime::TimerId NetRuntime::Impl::set_timer(const std::string& agent, Millis delay, std::string tag) {
  const auto id = next_timer++;
  auto timer = std::make_unique<asio::steady_timer>(io, delay);
  timer->async_wait([this, id, agent, tag = std::move(tag)](const boost::system::error_code& ec) {
    if (ec) return;
    auto it = timers.find(id);
    if (it == timers.end()) return;
    timers.erase(it);
    auto a = agents.find(agent);
    if (a == agents.end()) return;
    Ctx ctx(*this, agent);
    a->second.agent->on_timer(id, tag, ctx);
  });
  timers.emplace(id, std::move(timer));
  return id;
}

void NetRuntime::Impl::accept(Hosted& h) {
  h.acceptor->async_accept([this, &h](const boost::system::error_code& ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    read(std::make_shared<Session>(std::move(socket)));
    accept(h);
  });
}

void NetRuntime::Impl::read(const std::shared_ptr<Session>& s) {
  s->socket.async_read_some(asio::buffer(s->chunk), [this, s](const boost::system::error_code& ec, std::size_t n) {
    if (ec) return;
    try {
      s->buffer.feed(std::span(s->chunk.data(), n));
      while (auto msg = s->buffer.next_message()) {
        if (msg->sender_address && !agents.count(msg->sender)) {
          learned[msg->sender] = Endpoint::parse(*msg->sender_address);
        }
        deliver(*msg);
      }
    } catch (const Error&) {
      // A peer that breaks framing loses its connection.
      boost::system::error_code ignored;
      s->socket.close(ignored);
      return;
    }
    read(s);
  });
}

NetRuntime::NetRuntime() : impl_(std::make_unique<Impl>()) {
  impl_->work.emplace(asio::make_work_guard(impl_->io));
}

NetRuntime::~NetRuntime() { stop(); }

Endpoint NetRuntime::add_agent(std::shared_ptr<runtime::Agent> agent, Endpoint listen) {
  if (impl_->started) throw Error("add agents before start()");
  const auto id = agent->id();
  Impl::Hosted h;
  h.agent = std::move(agent);
  h.acceptor = std::make_unique<tcp::acceptor>(impl_->io);
  const auto ep = to_asio(impl_->io, listen);
  h.acceptor->open(ep.protocol());
  h.acceptor->set_option(tcp::acceptor::reuse_address(true));
  boost::system::error_code ec;
  h.acceptor->bind(ep, ec);
  if (ec) throw ConfigError(fmt::format("cannot listen on {}: {}", listen.to_string(), ec.message()));
  h.acceptor->listen();
  h.endpoint = Endpoint{listen.host, h.acceptor->local_endpoint().port()};
  const auto bound = h.endpoint;
  auto [it, inserted] = impl_->agents.emplace(id, std::move(h));
  if (!inserted) throw ConfigError("duplicate agent id " + id);
  impl_->accept(it->second);
  return bound;
}

void NetRuntime::add_peer(const std::string& agent_id, Endpoint at) { impl_->peers[agent_id] = std::move(at); }
void NetRuntime::set_resolver(Resolver resolver) { impl_->resolver = std::move(resolver); }
void NetRuntime::set_transcript(std::shared_ptr<runtime::TranscriptSink> sink) { impl_->transcript = std::move(sink); }

runtime::Agent* NetRuntime::find_agent(const std::string& id) const {
  auto it = impl_->agents.find(id);
  return it == impl_->agents.end() ? nullptr : it->second.agent.get();
}

void NetRuntime::start() {
  if (impl_->started) return;
  impl_->started = true;
  for (auto& [id, h] : impl_->agents) {
    asio::post(impl_->io, [this, id = id] {
      Impl::Ctx ctx(*impl_, id);
      impl_->agents.at(id).agent->on_start(ctx);
    });
  }
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

void NetRuntime::stop() {
  if (!impl_->thread.joinable()) return;
  asio::post(impl_->io, [this] {
    for (auto& [_, h] : impl_->agents) {
      boost::system::error_code ignored;
      h.acceptor->close(ignored);
    }
    for (auto& [_, out] : impl_->outgoing) {
      boost::system::error_code ignored;
      out->socket.close(ignored);
    }
    impl_->timers.clear();
    impl_->work.reset();
    impl_->io.stop();
  });
  impl_->thread.join();
}

void NetRuntime::invoke(const std::string& agent_id, std::function<void(runtime::Context&)> fn) {
  asio::post(impl_->io, [this, agent_id, fn = std::move(fn)] {
    if (!impl_->agents.count(agent_id)) return;
    Impl::Ctx ctx(*impl_, agent_id);
    fn(ctx);
  });
}

// ---------------------------------------------------------------------------

nlohmann::json registry_request(const Endpoint& registry, const nlohmann::json& request, Millis timeout) {
  asio::io_context io;
  tcp::socket socket(io);
  std::vector<std::uint8_t> reply;
  std::array<std::uint8_t, 4096> chunk{};
  protocol::FrameBuffer buffer;
  std::optional<std::string> body;
  boost::system::error_code result = asio::error::timed_out;
  const auto frame = protocol::encode_frame(request.dump());

  std::function<void()> read_more = [&] {
    socket.async_read_some(asio::buffer(chunk), [&](const boost::system::error_code& ec, std::size_t n) {
      if (ec) {
        result = ec;
        return;
      }
      try {
        buffer.feed(std::span(chunk.data(), n));
        body = buffer.next_frame();
      } catch (const Error&) {
        result = asio::error::invalid_argument;
        return;
      }
      if (body) {
        result = {};
        return;
      }
      read_more();
    });
  };
  socket.async_connect(to_asio(io, registry), [&](const boost::system::error_code& ec) {
    if (ec) {
      result = ec;
      return;
    }
    asio::async_write(socket, asio::buffer(frame), [&](const boost::system::error_code& wec, std::size_t) {
      if (wec) {
        result = wec;
        return;
      }
      read_more();
    });
  });
  io.run_for(timeout);
  if (result || !body) throw Error(fmt::format("registry {} unreachable: {}", registry.to_string(), result.message()));
  return nlohmann::json::parse(*body);
}

struct RegistryServer::Impl {
  std::shared_ptr<harness::Registry> registry;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  Endpoint endpoint;
  std::thread thread;

  struct Session : std::enable_shared_from_this<Session> {
    explicit Session(tcp::socket s) : socket(std::move(s)) {}
    tcp::socket socket;
    std::array<std::uint8_t, 4096> chunk{};
    protocol::FrameBuffer buffer;
    std::deque<std::vector<std::uint8_t>> replies;
  };

  void accept() {
    acceptor.async_accept([this](const boost::system::error_code& ec, tcp::socket socket) {
      if (ec) return;
      read(std::make_shared<Session>(std::move(socket)));
      accept();
    });
  }

  void read(const std::shared_ptr<Session>& s) {
    s->socket.async_read_some(asio::buffer(s->chunk), [this, s](const boost::system::error_code& ec, std::size_t n) {
      if (ec) return;
      try {
        s->buffer.feed(std::span(s->chunk.data(), n));
        while (auto body = s->buffer.next_frame()) {
          nlohmann::json reply;
          auto request = nlohmann::json::parse(*body, nullptr, false);
          if (request.is_discarded() || !request.is_object()) {
            reply = {{"ok", false}, {"error", "malformed request"}};
          } else {
            try {
              reply = registry->handle(request, wall_now());
            } catch (const std::exception& e) {
              reply = {{"ok", false}, {"error", e.what()}};
            }
          }
          auto frame = std::make_shared<std::vector<std::uint8_t>>(protocol::encode_frame(reply.dump()));
          asio::async_write(s->socket, asio::buffer(*frame), [s, frame](const boost::system::error_code&, std::size_t) {});
        }
      } catch (const Error&) {
        boost::system::error_code ignored;
        s->socket.close(ignored);
        return;
      }
      read(s);
    });
  }
};

RegistryServer::RegistryServer(std::shared_ptr<harness::Registry> registry, Endpoint listen)
    : impl_(std::make_unique<Impl>()) {
  impl_->registry = std::move(registry);
  const auto ep = to_asio(impl_->io, listen);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
  boost::system::error_code ec;
  impl_->acceptor.bind(ep, ec);
  if (ec) throw ConfigError(fmt::format("cannot listen on {}: {}", listen.to_string(), ec.message()));
  impl_->acceptor.listen();
  impl_->endpoint = Endpoint{listen.host, impl_->acceptor.local_endpoint().port()};
  impl_->accept();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

RegistryServer::~RegistryServer() { stop(); }

Endpoint RegistryServer::endpoint() const { return impl_->endpoint; }

void RegistryServer::stop() {
  if (!impl_->thread.joinable()) return;
  asio::post(impl_->io, [this] {
    boost::system::error_code ignored;
    impl_->acceptor.close(ignored);
    impl_->io.stop();
  });
  impl_->thread.join();
}

// ---------------------------------------------------------------------------

RemoteRegistry::RemoteRegistry(Endpoint registry, Millis refresh)
    : registry_(std::move(registry)), refresh_(refresh) {
  worker_ = std::thread([this] { loop(); });
}

RemoteRegistry::~RemoteRegistry() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void RemoteRegistry::heartbeat(const std::string& resource_id, const std::string& address, Timestamp) {
  {
    std::lock_guard lock(mu_);
    // While the registry is down only the newest heartbeat per resource is kept.
    std::erase_if(pending_, [&](const nlohmann::json& j) { return j.at("resource_id") == resource_id; });
    pending_.push_back({{"op", "heartbeat"}, {"resource_id", resource_id}, {"address", address}});
  }
  cv_.notify_all();
}

std::vector<harness::RegistryEntry> RemoteRegistry::alive(Timestamp) const {
  std::lock_guard lock(mu_);
  return cache_;
}

std::optional<Endpoint> RemoteRegistry::resolve(const std::string& resource_id) const {
  std::lock_guard lock(mu_);
  for (const auto& e : cache_) {
    if (e.resource_id != resource_id) continue;
    try {
      return Endpoint::parse(e.address);
    } catch (const ConfigError&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

bool RemoteRegistry::refresh() {
  try {
    const auto reply = registry_request(registry_, {{"op", "list"}});
    std::vector<harness::RegistryEntry> entries;
    for (const auto& e : reply.at("entries")) entries.push_back(harness::registry_entry_from_json(e));
    std::lock_guard lock(mu_);
    cache_ = std::move(entries);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void RemoteRegistry::loop() {
  Millis backoff{0};
  auto next_refresh = std::chrono::steady_clock::now();
  std::unique_lock lock(mu_);
  while (!stopping_) {
    while (!pending_.empty() && !stopping_) {
      auto request = pending_.front();
      lock.unlock();
      bool ok = true;
      try {
        registry_request(registry_, request);
      } catch (const std::exception&) {
        ok = false;
      }
      lock.lock();
      if (ok) {
        if (!pending_.empty() && pending_.front() == request) pending_.pop_front();
        backoff = Millis{0};
      } else {
        backoff = std::min(Millis{5000}, backoff.count() ? backoff * 2 : Millis{100});
        cv_.wait_for(lock, backoff, [this] { return stopping_; });
      }
    }
    if (stopping_) break;
    if (std::chrono::steady_clock::now() >= next_refresh) {
      lock.unlock();
      refresh();
      lock.lock();
      next_refresh = std::chrono::steady_clock::now() + refresh_;
    }
    cv_.wait_until(lock, next_refresh, [this] { return stopping_ || !pending_.empty(); });
  }
}

}  // namespace ramp::net
