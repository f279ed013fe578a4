#include "ramp/scenario.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <random>

namespace ramp::harness {

using nlohmann::json;

namespace {

Money money_from_json(const json& j) {
  if (j.is_string()) return Money::parse(j.get<std::string>());
  return Money::from_double(j.get<double>());
}

Millis seconds_from_json(const json& j) { return Millis(static_cast<std::int64_t>(std::llround(j.get<double>() * 1000))); }

double to_seconds(Millis m) { return static_cast<double>(m.count()) / 1000.0; }

SyntheticLogSpec synthetic_from_json(const json& j) {
  SyntheticLogSpec s;
  s.seed = j.value("seed", std::uint64_t{1});
  s.load = j.value("load", 0.6);
  s.constant = j.value("constant", false);
  s.max_job_fraction = j.value("max_job_fraction", 0.25);
  if (s.load < 0 || s.load > 1) throw ConfigError("synthetic load must be in [0, 1]");
  return s;
}

json synthetic_to_json(const SyntheticLogSpec& s) {
  return {{"seed", s.seed}, {"load", s.load}, {"constant", s.constant}, {"max_job_fraction", s.max_job_fraction}};
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const json& j, const std::string& base_dir) {
  ScenarioConfig c;
  c.name = j.value("name", c.name);
  if (j.contains("system_start")) {
    c.system_start = std::chrono::time_point_cast<Millis>(parse_iso_datetime(j.at("system_start").get<std::string>()));
  }
  for (const auto& [name, m] : j.at("machines").items()) {
    MachineSpec spec;
    spec.name = name;
    spec.cores = m.at("cores").get<std::int64_t>();
    if (m.contains("log")) {
      std::filesystem::path p(m.at("log").get<std::string>());
      spec.log_path = p.is_absolute() ? p.string() : (std::filesystem::path(base_dir) / p).string();
    }
    if (m.contains("synthetic")) spec.synthetic = synthetic_from_json(m.at("synthetic"));
    if (spec.log_path.empty() && !spec.synthetic) spec.synthetic = SyntheticLogSpec{};
    if (spec.cores <= 0) throw ConfigError("machine " + name + " needs cores > 0");
    c.machines[name] = spec;
  }
  for (const auto& r : j.at("resources")) {
    ResourceSpec spec;
    spec.name = r.at("name").get<std::string>();
    spec.base = r.at("base").get<std::string>();
    spec.offset = r.value("offset", std::int64_t{0});
    spec.start_price = money_from_json(r.at("start_price"));
    spec.min_price = money_from_json(r.at("min_price"));
    if (r.contains("synthetic")) spec.synthetic = synthetic_from_json(r.at("synthetic"));
    if (!c.machines.count(spec.base)) throw ConfigError("resource " + spec.name + " names unknown machine " + spec.base);
    if (spec.offset < 0) throw ConfigError("resource " + spec.name + " has a negative offset");
    c.resources.push_back(spec);
  }
  const json workloads = j.value("workloads", json::array());
  for (const auto& w : workloads) {
    WorkloadSpec spec;
    spec.name = w.at("name").get<std::string>();
    spec.cores = w.at("cores").get<std::int64_t>();
    spec.start_delay = w.at("start_delay").get<std::int64_t>();
    spec.price = money_from_json(w.at("price"));
    spec.wall_time = w.value("wall_time", std::int64_t{3600});
    spec.rounds = w.value("rounds", 3);
    spec.deadline_window = w.value("deadline_window", std::int64_t{86400});
    spec.units = w.value("units", 1);
    c.workloads.push_back(spec);
  }
  c.repetitions = j.value("repetitions", 1);
  if (j.contains("round_interval")) c.round_interval = seconds_from_json(j.at("round_interval"));
  if (j.contains("workload_gap")) c.workload_gap = seconds_from_json(j.at("workload_gap"));
  if (j.contains("hold_timeout")) c.hold_timeout = seconds_from_json(j.at("hold_timeout"));
  if (j.contains("sweep_interval")) c.sweep_interval = seconds_from_json(j.at("sweep_interval"));
  c.anticipated_rounds = j.value("anticipated_rounds", c.anticipated_rounds);
  c.approval = agents::approval_mode_from_string(j.value("approval", std::string("auto")));
  if (j.value("formula", std::string("load-scaled")) == "literal") c.formula = pricing::DecrementFormula::kLiteral;
  c.horizon = j.value("horizon", c.horizon);
  c.seed = j.value("seed", c.seed);
  if (j.contains("user_funds")) c.user_funds = money_from_json(j.at("user_funds"));
  if (j.contains("timing")) {
    const auto& t = j.at("timing");
    c.timing.network_latency = Millis(t.value("latency_ms", std::int64_t{2}));
    c.timing.message_cost = Millis(t.value("message_cost_ms", std::int64_t{1}));
    const json costs = t.value("cost_ms", json::object());
    for (const auto& [perf, ms] : costs.items()) {
      c.timing.cost_by_performative[protocol::performative_from_wire(perf)] = Millis(ms.get<std::int64_t>());
    }
  }
  if (c.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  return c;
}

ScenarioConfig ScenarioConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("scenario " + path + ": " + e.what());
  }
  return from_json(j, std::filesystem::path(path).parent_path().string());
}

json ScenarioConfig::to_json() const {
  json machines_j = json::object();
  for (const auto& [name, m] : machines) {
    json mj{{"cores", m.cores}};
    if (!m.log_path.empty()) mj["log"] = m.log_path;
    if (m.synthetic) mj["synthetic"] = synthetic_to_json(*m.synthetic);
    machines_j[name] = mj;
  }
  json resources_j = json::array();
  for (const auto& r : resources) {
    json rj{{"name", r.name},
            {"base", r.base},
            {"offset", r.offset},
            {"start_price", r.start_price.to_string()},
            {"min_price", r.min_price.to_string()}};
    if (r.synthetic) rj["synthetic"] = synthetic_to_json(*r.synthetic);
    resources_j.push_back(rj);
  }
  json workloads_j = json::array();
  for (const auto& w : workloads) {
    workloads_j.push_back({{"name", w.name},
                           {"cores", w.cores},
                           {"start_delay", w.start_delay},
                           {"price", w.price.to_string()},
                           {"wall_time", w.wall_time},
                           {"rounds", w.rounds},
                           {"deadline_window", w.deadline_window},
                           {"units", w.units}});
  }
  json cost = json::object();
  for (const auto& [p, ms] : timing.cost_by_performative) cost[protocol::to_wire(p)] = ms.count();
  return {{"name", name},
          {"system_start", format_iso_datetime(std::chrono::floor<Seconds>(system_start))},
          {"machines", machines_j},
          {"resources", resources_j},
          {"workloads", workloads_j},
          {"repetitions", repetitions},
          {"round_interval", to_seconds(round_interval)},
          {"workload_gap", to_seconds(workload_gap)},
          {"hold_timeout", to_seconds(hold_timeout)},
          {"sweep_interval", to_seconds(sweep_interval)},
          {"anticipated_rounds", anticipated_rounds},
          {"approval", agents::to_string(approval)},
          {"formula", formula == pricing::DecrementFormula::kLiteral ? "literal" : "load-scaled"},
          {"horizon", horizon},
          {"seed", seed},
          {"user_funds", user_funds.to_string()},
          {"timing",
           {{"latency_ms", timing.network_latency.count()},
            {"message_cost_ms", timing.message_cost.count()},
            {"cost_ms", cost}}}};
}

runtime::TimingModel study_timing() {
  runtime::TimingModel t;
  t.network_latency = Millis{25};
  t.message_cost = Millis{5};
  t.cost_by_performative[protocol::Performative::kCallForProposals] = Millis{60};
  return t;
}

ScenarioConfig table2_scenario() {
  ScenarioConfig c;
  c.name = "table2";
  c.system_start = std::chrono::time_point_cast<Millis>(parse_iso_datetime("2012-06-01T00:00:00Z"));
  const std::vector<std::pair<std::string, std::int64_t>> machines{
      {"Atlas", 9216}, {"Thunder", 4008}, {"Intrepid", 163840}, {"RICC", 8192}, {"CURIE", 93312}};
  std::uint64_t seed = 11;
  for (const auto& [name, cores] : machines) {
    c.machines[name] = MachineSpec{name, cores, "", SyntheticLogSpec{seed++, 0.3, false, 0.25}};
  }
  struct Row {
    const char* name;
    const char* base;
    std::int64_t offset;
    int sp;
    int mp;
  };
  const Row rows[] = {
      {"atlas1", "Atlas", 3370000, 33, 25},        {"atlas2", "Atlas", 1370000, 33, 26},
      {"thunder1", "Thunder", 250000, 70, 40},     {"thunder2", "Thunder", 1300000, 75, 60},
      {"thunder3", "Thunder", 130000, 70, 35},     {"thunder4", "Thunder", 450000, 75, 50},
      {"intrepid1", "Intrepid", 50000, 55, 35},    {"intrepid2", "Intrepid", 1500000, 65, 25},
      {"intrepid3", "Intrepid", 15000000, 53, 25}, {"intrepid4", "Intrepid", 750000, 55, 30},
      {"intrepid5", "Intrepid", 2500000, 65, 28},  {"intrepid6", "Intrepid", 90000, 53, 30},
      {"ricc1", "RICC", 50000, 40, 25},            {"ricc2", "RICC", 7570000, 45, 25},
      {"ricc3", "RICC", 500000, 45, 25},           {"ricc4", "RICC", 757000, 45, 30},
      {"curie1", "CURIE", 150000, 80, 40},         {"curie2", "CURIE", 1375000, 80, 65},
      {"curie3", "CURIE", 350000, 80, 30},         {"curie4", "CURIE", 2375000, 70, 65},
  };
  for (const auto& r : rows) {
    c.resources.push_back(ResourceSpec{r.name, r.base, r.offset, Money::from_units(r.sp), Money::from_units(r.mp), {}});
  }
  c.workloads = table3_workloads();
  c.repetitions = 3;
  c.timing = study_timing();
  return c;
}

std::vector<WorkloadSpec> table3_workloads() {
  struct Row {
    const char* name;
    std::int64_t cores;
    std::int64_t delay;
    int price;
  };
  const Row rows[] = {
      {"exp1", 16, 300, 70},       {"exp2", 16, 3600, 55},      {"exp3", 16, 43200, 35},
      {"exp4", 256, 300, 50},      {"exp5", 256, 3600, 30},     {"exp6", 256, 43200, 25},
      {"exp7", 1024, 3600, 55},    {"exp8", 1024, 43200, 35},   {"exp9", 4096, 3600, 55},
      {"exp10", 4096, 43200, 35},  {"exp11", 20480, 300, 80},   {"exp12", 20480, 3600, 55},
      {"exp13", 20480, 43200, 35},
  };
  std::vector<WorkloadSpec> out;
  for (const auto& r : rows) {
    WorkloadSpec w;
    w.name = r.name;
    w.cores = r.cores;
    w.start_delay = r.delay;
    w.price = Money::from_units(r.price);
    out.push_back(w);
  }
  return out;
}

queuesim::SwfLog synthetic_log(const SyntheticLogSpec& spec, std::int64_t cores, std::int64_t from, std::int64_t to) {
  queuesim::SwfLog log;
  log.comments = {"; Version: 2.2", "; Computer: synthetic", fmt::format("; MaxProcs: {}", cores),
                  fmt::format("; Note: generated, seed {} target load {}", spec.seed, spec.load)};
  if (to <= from) return log;
  if (spec.constant) {
    const auto held = static_cast<std::int64_t>(std::llround(spec.load * static_cast<double>(cores)));
    if (held > 0) log.jobs.push_back(queuesim::make_swf_job(1, from, 0, to - from, held, to - from));
    return log;
  }

  std::mt19937_64 rng(spec.seed);
  const auto max_job = std::max<std::int64_t>(1, static_cast<std::int64_t>(spec.max_job_fraction * static_cast<double>(cores)));
  const int max_pow = static_cast<int>(std::floor(std::log2(static_cast<double>(max_job))));
  std::uniform_int_distribution<int> pow_dist(0, max_pow);
  std::uniform_int_distribution<std::int64_t> wall_dist(1800, 43200);
  std::uniform_real_distribution<double> run_frac(0.2, 1.0);
  double mean_cores = 0;
  for (int k = 0; k <= max_pow; ++k) mean_cores += std::pow(2.0, k);
  mean_cores /= max_pow + 1;
  const double mean_area = mean_cores * (1800.0 + 43200.0) / 2.0;
  const double rate = spec.load * static_cast<double>(cores) / mean_area;
  if (rate <= 0) return log;
  std::exponential_distribution<double> gap(rate);

  // FCFS placement keeps the generated log free of oversubscription.
  using Running = std::pair<std::int64_t, std::int64_t>;  // end, cores
  std::priority_queue<Running, std::vector<Running>, std::greater<>> running;
  std::int64_t used = 0;
  std::int64_t last_start = 0;
  double t = static_cast<double>(std::max<std::int64_t>(0, from - 2 * 43200));
  std::int64_t id = 1;
  while (t < static_cast<double>(to)) {
    t += gap(rng);
    const auto submit = static_cast<std::int64_t>(t);
    const std::int64_t c = std::min<std::int64_t>(cores, std::int64_t{1} << pow_dist(rng));
    const std::int64_t wall = wall_dist(rng);
    const auto run = static_cast<std::int64_t>(static_cast<double>(wall) * run_frac(rng));
    std::int64_t start = std::max(submit, last_start);
    while (!running.empty() && running.top().first <= start) {
      used -= running.top().second;
      running.pop();
    }
    while (used + c > cores) {
      start = std::max(start, running.top().first);
      used -= running.top().second;
      running.pop();
    }
    running.emplace(start + wall, c);
    used += c;
    last_start = start;
    if (start + wall > from - 43200) log.jobs.push_back(queuesim::make_swf_job(id, submit, start - submit, run, c, wall));
    ++id;
  }
  return log;
}

rfql::RfqDocument workload_rfq(const WorkloadSpec& w, Timestamp now, const std::string& document_id) {
  rfql::RfqDocument doc;
  doc.document_id = document_id;
  const auto earliest = std::chrono::ceil<Seconds>(now) + Seconds(w.start_delay);
  for (int i = 0; i < std::max(1, w.units); ++i) {
    rfql::RfqRequest r;
    r.index = i;
    r.cpu_hour_cost = w.price;
    r.total_cores = w.cores;
    r.wall_time = w.wall_time;
    r.earliest_start = earliest;
    r.deadline = earliest + Seconds(w.deadline_window);
    doc.requests.push_back(r);
  }
  return doc;
}

std::unique_ptr<queuesim::MachineModel> build_machine(const ScenarioConfig& config, const ResourceSpec& resource,
                                                      Timestamp system_start) {
  const auto& m = config.machines.at(resource.base);
  queuesim::SwfLog log;
  const auto synthetic = resource.synthetic ? resource.synthetic : m.synthetic;
  if (synthetic) {
    auto spec = *synthetic;
    if (!resource.synthetic) spec.seed = spec.seed * 1000003 + static_cast<std::uint64_t>(resource.offset);
    log = synthetic_log(spec, m.cores, resource.offset, resource.offset + config.horizon);
  } else {
    log = queuesim::load_swf_file(m.log_path);
  }
  return std::make_unique<queuesim::MachineModel>(resource.name, m.cores, std::move(log),
                                                  queuesim::SimClock{system_start, resource.offset});
}

Market::Market(const ScenarioConfig& config, Options options) : config_(config) {
  const Timestamp start = options.start.value_or(config.system_start);
  runtime_ = std::make_unique<runtime::SimRuntime>(start, config.timing);
  if (options.transcript) runtime_->set_transcript(options.transcript);
  registry_ = std::make_shared<Registry>();
  keys_ = std::make_shared<signing::KeyRing>();
  bank_ = std::make_shared<bank::Bank>(keys_);
  runtime_->add_agent(std::make_shared<bank::BankAgent>("bank", bank_));

  for (const auto& spec : config.resources) {
    auto key = signing::derive_key(spec.name, config.seed);
    keys_->add(key);
    agents::ResourceAgentConfig rc;
    rc.resource_id = spec.name;
    const auto cores = config.machines.at(spec.base).cores;
    rc.profile.operating_system = "Linux";
    rc.profile.architecture = "x86_64";
    rc.profile.node_cores = cores % 8 == 0 ? 8 : 1;
    rc.profile.node_count = cores / rc.profile.node_cores;
    rc.pricing.start_price = spec.start_price;
    rc.pricing.min_price = spec.min_price;
    rc.pricing.anticipated_rounds = config.anticipated_rounds;
    rc.pricing.formula = config.formula;
    rc.hold_timeout = config.hold_timeout;
    rc.sweep_interval = config.sweep_interval;
    rc.address = "sim://" + spec.name;
    auto agent = std::make_shared<agents::ResourceAgent>(rc, build_machine(config, spec, config.system_start), keys_,
                                                         signing::Signer(key), registry_);
    resources_.push_back(agent.get());
    runtime_->add_agent(agent);
  }
  for (int i = 0; i < options.users; ++i) {
    const auto id = fmt::format("user{}", i + 1);
    auto key = signing::derive_key(id, config.seed);
    keys_->add(key);
    if (config.user_funds > Money{}) bank_->deposit(id, config.user_funds, start);
    auto agent = std::make_shared<agents::UserAgent>(agents::UserAgentConfig{id, "bank"}, registry_,
                                                     signing::Signer(key));
    users_.push_back(agent.get());
    runtime_->add_agent(agent);
  }
  // Let every agent start and register.
  runtime_->run_until(runtime_->now());
}

agents::ResourceAgent* Market::resource(const std::string& id) const {
  for (auto* r : resources_)
    if (r->id() == id) return r;
  return nullptr;
}

agents::AuctionConfig Market::auction_config(int rounds) const {
  agents::AuctionConfig cfg;
  cfg.rounds = rounds;
  cfg.round_interval = config_.round_interval;
  cfg.approval = config_.approval;
  return cfg;
}

std::string Market::start_auction(std::size_t user, rfql::RfqDocument doc, agents::AuctionConfig cfg) {
  std::string id;
  std::exception_ptr error;
  auto* agent = users_.at(user);
  runtime_->invoke(agent->id(), [&, agent](runtime::Context& ctx) {
    try {
      id = agent->start_auction(std::move(doc), cfg, ctx);
    } catch (...) {
      error = std::current_exception();
    }
  });
  while (id.empty() && !error && runtime_->step()) {
  }
  if (error) std::rethrow_exception(error);
  return id;
}

bool Market::run_auction(std::size_t user, const std::string& auction_id, Millis limit) {
  auto* agent = users_.at(user);
  auto settled = [&] {
    const auto* a = agent->auction(auction_id);
    return a && (a->closed() || a->phase == agents::AuctionPhase::kAwaitingApproval);
  };
  return runtime_->run_until(settled, runtime_->now() + limit);
}

void Market::advance(Millis d) { runtime_->run_until(runtime_->now() + d); }

ScenarioRun run_scenario(const ScenarioConfig& config, std::shared_ptr<runtime::TranscriptSink> extra_sink,
                         double pace) {
  auto memory = std::make_shared<runtime::MemoryTranscript>();
  auto tee = std::make_shared<runtime::TeeTranscript>();
  tee->add(memory);
  if (extra_sink) tee->add(extra_sink);
  Market market(config, {1, tee, std::nullopt});
  if (pace > 0) market.runtime().set_pacing(pace);
  for (int rep = 0; rep < config.repetitions; ++rep) {
    for (const auto& w : config.workloads) {
      auto doc = workload_rfq(w, market.runtime().now(), fmt::format("{}-{}-{}", config.name, w.name, rep + 1));
      const auto id = market.start_auction(0, std::move(doc), market.auction_config(w.rounds));
      market.run_auction(0, id);
      // An auction parked for approval has nobody to approve it in a batch run.
      market.advance(config.workload_gap);
    }
  }
  return ScenarioRun{memory->records(), market.bank().entries()};
}

}  // namespace ramp::harness
