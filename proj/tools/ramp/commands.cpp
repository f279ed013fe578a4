#include "commands.hpp"

#include "ramp/bank.hpp"
#include "ramp/error.hpp"
#include "ramp/experiments.hpp"
#include "ramp/metrics.hpp"
#include "ramp/net.hpp"
#include "ramp/ops_api.hpp"
#include "ramp/resource_agent.hpp"
#include "ramp/scenario.hpp"
#include "ramp/user_agent.hpp"

#include <fmt/format.h>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace ramp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void install_signal_handlers() {
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
}

void wait_for_signal() {
  install_signal_handlers();
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

/// Writes JSON lines to stdout.
class StdoutTranscript final : public runtime::TranscriptSink {
 public:
  void write(const json& record) override {
    std::lock_guard lock(mu_);
    std::cout << record.dump() << '\n' << std::flush;
  }

 private:
  std::mutex mu_;
};

std::shared_ptr<runtime::TranscriptSink> transcript_sink(const std::string& path) {
  if (path.empty()) return nullptr;
  if (path == "-") return std::make_shared<StdoutTranscript>();
  return std::make_shared<runtime::FileTranscript>(path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? p : (base / path).string();
}

}  // namespace

int run_resource(const ResourceOptions& o) {
  const auto j = read_json_file(o.config);
  const auto base = fs::path(o.config).parent_path();
  auto rc = agents::ResourceAgentConfig::from_json(j);
  const auto listen = net::Endpoint::parse(j.value("listen", std::string("127.0.0.1:7701")));

  auto mc = queuesim::MachineConfig::from_json(j.at("machine"));
  mc.log_path = resolve(base, mc.log_path);
  std::unique_ptr<queuesim::QueuePlugin> queue = queuesim::load_machine(rc.resource_id, mc);
  if (j.value("queue", std::string("replay")) == "predictive") {
    queue = std::make_unique<queuesim::PredictiveQueueAdapter>(std::move(queue));
  }

  auto keys = std::make_shared<signing::KeyRing>(signing::KeyRing::load_dir(resolve(base, j.at("keys").get<std::string>())));
  signing::Signer signer(signing::load_key_file(resolve(base, j.at("key").get<std::string>())));

  std::shared_ptr<net::RemoteRegistry> registry;
  if (j.contains("registry")) registry = std::make_shared<net::RemoteRegistry>(net::Endpoint::parse(j.at("registry")));
  net::NetRuntime rt;
  rc.address = listen.to_string();
  auto agent = std::make_shared<agents::ResourceAgent>(rc, std::move(queue), keys, std::move(signer), registry);
  const auto bound = rt.add_agent(agent, listen);
  rt.add_peer(rc.bank_id, net::Endpoint::parse(j.value("bank", std::string("127.0.0.1:7702"))));
  if (registry) {
    rt.set_resolver([registry](const std::string& id) { return registry->resolve(id); });
  }
  rt.set_transcript(transcript_sink(j.value("transcript", std::string{})));
  rt.start();
  fmt::print(stderr, "resource {} listening on {}\n", rc.resource_id, bound.to_string());
  wait_for_signal();
  rt.stop();
  return 0;
}

int run_user(const UserOptions& o) {
  auto key = signing::load_key_file(o.key);
  const auto user_id = key.principal;
  auto registry = std::make_shared<net::RemoteRegistry>(net::Endpoint::parse(o.registry));
  registry->refresh();

  net::NetRuntime rt;
  auto agent = std::make_shared<agents::UserAgent>(agents::UserAgentConfig{user_id, "bank"}, registry,
                                                   signing::Signer(std::move(key)));
  rt.add_agent(agent, net::Endpoint::parse(o.listen));
  rt.add_peer("bank", net::Endpoint::parse(o.bank));
  rt.set_resolver([registry](const std::string& id) { return registry->resolve(id); });
  rt.set_transcript(transcript_sink(o.transcript.empty() ? "-" : o.transcript));
  rt.start();

  std::unique_ptr<harness::OpsApi> ops;
  if (!o.ops_listen.empty()) {
    const auto ep = net::Endpoint::parse(o.ops_listen);
    ops = std::make_unique<harness::OpsApi>(std::make_shared<harness::NetOpsBackend>(rt, user_id, registry));
    const int port = ops->start(ep.host, ep.port);
    fmt::print(stderr, "ops api on {}:{}\n", ep.host, port);
  }

  install_signal_handlers();
  std::string auction_id;
  if (!o.rfq.empty()) {
    auto doc = rfql::parse_rfq(read_text(o.rfq));
    agents::AuctionConfig cfg;
    cfg.rounds = o.rounds;
    cfg.round_interval = Millis(static_cast<std::int64_t>(o.round_interval * 1000));
    cfg.approval = agents::approval_mode_from_string(o.approval);
    cfg.validate();
    auction_id = rt.call(user_id, [&](runtime::Context& ctx) { return agent->start_auction(std::move(doc), cfg, ctx); });
    fmt::print(stderr, "auction {} started\n", auction_id);
  }

  int status = 0;
  bool prompted = false;
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (auction_id.empty()) continue;
    auto snapshot = rt.call(user_id, [&](runtime::Context&) { return agents::auction_to_json(*agent->auction(auction_id)); });
    const auto phase = snapshot.at("phase").get<std::string>();
    if (phase == "awaiting-approval" && !prompted && !ops) {
      prompted = true;
      // Without an ops API the operator answers on stdin: "<unit> accept|reject".
      for (const auto& u : snapshot.at("unit_states")) {
        if (!u.contains("pending_approval")) continue;
        fmt::print(stderr, "unit {} awaits approval: {} (accept/reject)\n", u.at("unit").get<int>(),
                   u.at("pending_approval").dump());
        std::string answer;
        if (!std::getline(std::cin, answer)) answer = "reject";
        const bool accept = answer.rfind("a", 0) == 0;
        const int unit = u.at("unit").get<int>();
        try {
          rt.call(user_id, [&](runtime::Context& ctx) { agent->approve(auction_id, unit, accept, ctx); });
        } catch (const Error& e) {
          fmt::print(stderr, "approval failed: {}\n", e.what());
        }
      }
    }
    if (phase != "awaiting-approval") prompted = false;
    if ((phase == "done" || phase == "failed") && !o.stay) {
      status = phase == "done" ? 0 : 2;
      break;
    }
  }
  // Let the last settlement messages drain.
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  if (ops) ops->stop();
  rt.stop();
  return status;
}

int run_bank(const BankOptions& o) {
  auto keys = std::make_shared<signing::KeyRing>(signing::KeyRing::load_dir(o.keys));
  auto bank = std::make_shared<bank::Bank>(keys, o.ledger);
  net::NetRuntime rt;
  const auto bound = rt.add_agent(std::make_shared<bank::BankAgent>("bank", bank), net::Endpoint::parse(o.listen));
  rt.set_transcript(transcript_sink(o.transcript));
  rt.start();
  fmt::print(stderr, "bank listening on {} with {} ledger entries\n", bound.to_string(), bank->entries().size());
  wait_for_signal();
  rt.stop();
  return 0;
}

int bank_credit(const std::string& ledger, const std::string& keys, const std::string& principal,
                const std::string& amount) {
  auto ring = std::make_shared<signing::KeyRing>(keys.empty() ? signing::KeyRing{} : signing::KeyRing::load_dir(keys));
  bank::Bank bank(ring, ledger);
  const auto now = std::chrono::time_point_cast<Millis>(std::chrono::system_clock::now());
  const auto e = bank.deposit(principal, Money::parse(amount), now);
  std::cout << bank::entry_to_json(e).dump() << '\n';
  return 0;
}

int bank_register_key(const std::string& keys, const std::string& principal, const std::string& keyfile) {
  auto key = signing::load_key_file(keyfile);
  if (key.principal != principal) {
    throw ConfigError(fmt::format("key file belongs to '{}', not '{}'", key.principal, principal));
  }
  fs::create_directories(keys);
  const auto target = fs::path(keys) / (principal + ".key");
  if (fs::exists(target)) {
    const auto existing = signing::load_key_file(target.string());
    if (existing.verification_key != key.verification_key) throw ConfigError(principal + " already has a different key");
  }
  signing::save_key_file(target.string(), key, /*include_signing_key=*/false);
  fmt::print("registered {}\n", principal);
  return 0;
}

int run_keygen(const std::string& principal, const std::string& out_dir, const std::string& scheme) {
  fs::create_directories(out_dir);
  const auto path = (fs::path(out_dir) / (principal + ".key")).string();
  if (fs::exists(path)) throw ConfigError(path + " exists");
  signing::save_key_file(path, signing::generate_key(principal, scheme));
  fmt::print("{}\n", path);
  return 0;
}

int run_registry(const RegistryOptions& o) {
  auto registry =
      std::make_shared<harness::Registry>(Millis(static_cast<std::int64_t>(o.heartbeat_interval * 1000)));
  net::RegistryServer server(registry, net::Endpoint::parse(o.listen));
  fmt::print(stderr, "registry listening on {}\n", server.endpoint().to_string());
  wait_for_signal();
  server.stop();
  return 0;
}

int run_sim(const SimOptions& o) {
  auto config = o.scenario.empty() ? harness::table2_scenario() : harness::ScenarioConfig::load(o.scenario);
  if (o.repetitions) config.repetitions = *o.repetitions;

  if (!o.study.empty()) {
    json result;
    if (o.study == "rounds") {
      result = harness::to_json(harness::rounds_study(config, 10, config.repetitions));
    } else if (o.study == "units") {
      result = harness::to_json(harness::units_study(config, 10, config.repetitions));
    } else if (o.study == "users") {
      result = harness::to_json(harness::users_study(config, 10, config.repetitions));
    } else if (o.study == "winner") {
      result = harness::to_json(harness::winner_study(config, config.repetitions));
    } else if (o.study == "atomicity") {
      result = harness::to_json(harness::atomicity_study());
    } else if (o.study == "hold") {
      result = harness::to_json(harness::hold_timeout_study());
    } else if (o.study == "below-floor") {
      result = harness::to_json(harness::below_floor_study(config));
    } else {
      throw ConfigError("unknown study " + o.study);
    }
    std::cout << result.dump(2) << '\n';
    return 0;
  }

  fs::create_directories(o.out);
  const auto transcript_path = (fs::path(o.out) / "transcript.jsonl").string();
  auto sink = std::make_shared<runtime::FileTranscript>(transcript_path);
  harness::ScenarioRun run;
  try {
    run = harness::run_scenario(config, sink, o.virtual_time ? 0 : o.speed);
  } catch (const std::exception& e) {
    // Keep what was logged and mark the run as partial.
    std::ofstream(fs::path(o.out) / "PARTIAL") << e.what() << '\n';
    throw;
  }
  const auto metrics = harness::compute_metrics(run.records);
  const auto files = harness::write_csvs(metrics, o.out);
  json summary{{"auctions", metrics.auctions.size()},
               {"incomplete", metrics.incomplete},
               {"transcript", transcript_path},
               {"csv", files}};
  if (auto r = metrics.median_offer_ratio()) summary["median_offer_ratio"] = *r;
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_metrics(const std::string& transcript_dir, const std::string& out_dir) {
  const auto metrics = harness::compute_metrics(harness::read_transcripts(transcript_dir));
  const auto files = harness::write_csvs(metrics, out_dir.empty() ? transcript_dir : out_dir);
  json rows = json::array();
  for (const auto& r : metrics.by_rounds()) {
    rows.push_back({{"rounds", r.rounds}, {"mean_sale_price", r.mean_sale_price}, {"mean_duration_s", r.mean_duration_s}});
  }
  json summary{{"auctions", metrics.auctions.size()},
               {"incomplete", metrics.incomplete},
               {"by_rounds", rows},
               {"winners", metrics.winner_counts()},
               {"csv", files}};
  if (auto r = metrics.median_offer_ratio()) summary["median_offer_ratio"] = *r;
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_ops_api(const OpsOptions& o) {
  auto config = o.scenario.empty() ? harness::table2_scenario() : harness::ScenarioConfig::load(o.scenario);
  // A live demo starts the market clock now so timestamps read naturally.
  auto market = std::make_shared<harness::Market>(
      config, harness::Market::Options{o.users, nullptr, std::nullopt});
  auto backend = std::make_shared<harness::SimOpsBackend>(market, o.speed);
  harness::OpsApi api(backend);
  const auto ep = net::Endpoint::parse(o.listen);
  const int port = api.start(ep.host, ep.port);
  fmt::print(stderr, "ops api on {}:{} ({} resources, speed x{})\n", ep.host, port, config.resources.size(), o.speed);
  wait_for_signal();
  api.stop();
  backend->stop();
  return 0;
}

}  // namespace ramp::cli
