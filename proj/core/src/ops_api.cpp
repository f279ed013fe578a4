#include "ramp/ops_api.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <future>

namespace ramp::harness {

using nlohmann::json;

namespace {

constexpr auto kCallTimeout = std::chrono::seconds(10);

template <class T>
T await(std::future<T>& f) {
  if (f.wait_for(kCallTimeout) != std::future_status::ready) throw Error("agent loop did not answer");
  return f.get();
}

agents::AuctionConfig auction_config_from_json(const json& j) {
  agents::AuctionConfig c;
  if (j.contains("rounds")) c.rounds = j.at("rounds").get<int>();
  if (j.contains("round_interval")) {
    c.round_interval = Millis(static_cast<std::int64_t>(j.at("round_interval").get<double>() * 1000));
  }
  if (j.contains("approval")) c.approval = agents::approval_mode_from_string(j.at("approval").get<std::string>());
  if (j.contains("approval_timeout")) {
    c.approval_timeout = Millis(static_cast<std::int64_t>(j.at("approval_timeout").get<double>() * 1000));
  }
  c.validate();
  return c;
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void error_reply(httplib::Response& res, int status, const std::string& message) {
  reply(res, status, {{"error", message}});
}

}  // namespace

std::pair<rfql::RfqDocument, agents::AuctionConfig> parse_auction_request(const std::string& body,
                                                                          const std::string& content_type) {
  if (content_type.find("json") == std::string::npos) return {rfql::parse_rfq(body), agents::AuctionConfig{}};
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("rfql")) throw ParseError("expected {\"rfql\": ..., \"config\": {...}}");
  return {rfql::parse_rfq(j.at("rfql").get<std::string>()), auction_config_from_json(j.value("config", json::object()))};
}

// ---------------------------------------------------------------------------

SimOpsBackend::SimOpsBackend(std::shared_ptr<Market> market, double speed, std::size_t user)
    : market_(std::move(market)), user_(user) {
  thread_ = std::thread([this, speed] { market_->runtime().run_realtime(speed, stop_); });
}

SimOpsBackend::~SimOpsBackend() { stop(); }

void SimOpsBackend::stop() {
  stop_ = true;
  market_->runtime().wake();
  if (thread_.joinable()) thread_.join();
}

void SimOpsBackend::on_loop(std::function<void()> fn) {
  auto done = std::make_shared<std::promise<void>>();
  auto f = done->get_future();
  market_->runtime().post([fn = std::move(fn), done] {
    try {
      fn();
      done->set_value();
    } catch (...) {
      done->set_exception(std::current_exception());
    }
  });
  await(f);
}

void SimOpsBackend::with_user(UserFn fn) {
  auto done = std::make_shared<std::promise<void>>();
  auto f = done->get_future();
  auto& user = market_->user(user_);
  market_->runtime().post([this, &user, fn = std::move(fn), done] {
    market_->runtime().invoke(user.id(), [&user, fn, done](runtime::Context& ctx) {
      try {
        fn(user, ctx);
        done->set_value();
      } catch (...) {
        done->set_exception(std::current_exception());
      }
    });
  });
  await(f);
}

std::optional<json> SimOpsBackend::account(const std::string& id) {
  auto& bank = market_->bank();
  const auto balances = bank.balances();
  if (!balances.count(id)) return std::nullopt;
  return bank.statement(id);
}

json SimOpsBackend::resources() {
  json out = json::array();
  on_loop([&] {
    const auto now = market_->runtime().now();
    for (const auto& e : market_->registry().entries(now)) {
      auto j = registry_entry_to_json(e);
      if (auto* r = market_->resource(e.resource_id)) {
        if (auto a = r->last_attractiveness()) j["attractiveness"] = a->to_string();
      }
      out.push_back(std::move(j));
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

NetOpsBackend::NetOpsBackend(net::NetRuntime& runtime, std::string user_id,
                             std::shared_ptr<net::RemoteRegistry> registry)
    : runtime_(runtime), user_id_(std::move(user_id)), registry_(std::move(registry)) {}

void NetOpsBackend::with_user(UserFn fn) {
  auto* user = dynamic_cast<agents::UserAgent*>(runtime_.find_agent(user_id_));
  if (!user) throw Error("no user agent " + user_id_);
  runtime_.call(user_id_, [&](runtime::Context& ctx) { fn(*user, ctx); });
}

std::optional<json> NetOpsBackend::account(const std::string& id) {
  if (id != user_id_) return std::nullopt;
  auto result = std::make_shared<std::promise<std::optional<json>>>();
  auto f = result->get_future();
  with_user([result](agents::UserAgent& user, runtime::Context& ctx) {
    user.request_balance([result](std::optional<json> statement) { result->set_value(std::move(statement)); }, ctx);
  });
  return await(f);
}

json NetOpsBackend::resources() {
  json out = json::array();
  if (!registry_) return out;
  for (const auto& e : registry_->alive(Timestamp{})) out.push_back(registry_entry_to_json(e));
  return out;
}

// ---------------------------------------------------------------------------

struct OpsApi::Impl {
  std::shared_ptr<OpsBackend> backend;
  httplib::Server server;
  std::thread thread;

  void routes();
  /// Maps library errors onto HTTP statuses.
  template <class F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const NotFound& e) {
      error_reply(res, 404, e.what());
    } catch (const Conflict& e) {
      error_reply(res, 409, e.what());
    } catch (const rfql::ValidationError& e) {
      error_reply(res, 400, e.what());
    } catch (const ParseError& e) {
      error_reply(res, 400, e.what());
    } catch (const ConfigError& e) {
      error_reply(res, 400, e.what());
    } catch (const json::exception& e) {
      error_reply(res, 400, e.what());
    } catch (const std::exception& e) {
      error_reply(res, 503, e.what());
    }
  }
};

void OpsApi::Impl::routes() {
  server.Get("/auctions", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json list = json::array();
      backend->with_user([&](agents::UserAgent& user, runtime::Context&) {
        for (const auto& [_, a] : user.auctions()) list.push_back(agents::auction_to_json(a, false));
      });
      reply(res, 200, {{"auctions", list}});
    });
  });

  server.Get(R"(/auctions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      json body;
      backend->with_user([&](agents::UserAgent& user, runtime::Context&) {
        const auto* a = user.auction(id);
        if (!a) throw NotFound("unknown auction " + id);
        body = agents::auction_to_json(*a, true);
      });
      reply(res, 200, body);
    });
  });

  server.Post("/auctions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto [doc, config] = parse_auction_request(req.body, req.get_header_value("Content-Type"));
      std::string id;
      json snapshot;
      backend->with_user([&](agents::UserAgent& user, runtime::Context& ctx) {
        id = user.start_auction(std::move(doc), config, ctx);
        snapshot = agents::auction_to_json(*user.auction(id), false);
      });
      reply(res, 201, {{"auction_id", id}, {"phase", snapshot.at("phase")}});
    });
  });

  server.Post(R"(/auctions/([^/]+)/units/(\d+)/approve)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const int unit = std::stoi(req.matches[2]);
      const auto j = json::parse(req.body.empty() ? "{}" : req.body);
      bool accept = true;
      if (j.contains("decision")) {
        const auto d = j.at("decision").get<std::string>();
        if (d != "accept" && d != "reject") throw ConfigError("decision must be accept or reject");
        accept = d == "accept";
      } else if (j.contains("accept")) {
        accept = j.at("accept").get<bool>();
      }
      json snapshot;
      backend->with_user([&](agents::UserAgent& user, runtime::Context& ctx) {
        user.approve(id, unit, accept, ctx);
        snapshot = agents::auction_to_json(*user.auction(id), false);
      });
      reply(res, 200, snapshot);
    });
  });

  server.Get("/reservations", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      json list = json::array();
      backend->with_user([&](agents::UserAgent& user, runtime::Context&) {
        for (const auto& [_, p] : user.purchases()) list.push_back(agents::purchase_to_json(p));
      });
      reply(res, 200, {{"reservations", list}});
    });
  });

  server.Post(R"(/reservations/([^/]+)/cancel)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string rid = req.matches[1];
      backend->with_user([&](agents::UserAgent& user, runtime::Context& ctx) { user.cancel_purchase(rid, ctx); });
      reply(res, 202, {{"reservation_id", rid}, {"status", "cancelling"}});
    });
  });

  server.Get(R"(/accounts/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      auto statement = backend->account(id);
      if (!statement) throw NotFound("unknown account " + id);
      reply(res, 200, *statement);
    });
  });

  server.Get("/resources", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, {{"resources", backend->resources()}}); });
  });

  // The console is served from another origin during development.
  server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
  });
}

OpsApi::OpsApi(std::shared_ptr<OpsBackend> backend) : impl_(std::make_unique<Impl>()) {
  impl_->backend = std::move(backend);
  impl_->routes();
}

OpsApi::~OpsApi() { stop(); }

int OpsApi::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ConfigError(fmt::format("cannot listen on {}:{}", host, port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void OpsApi::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace ramp::harness
