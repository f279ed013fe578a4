#include "ramp/resource_agent.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>

namespace ramp::agents {

using protocol::Performative;

namespace {

const std::string kSettlePrefix = "settle#";
const std::string kCancelPrefix = "cancel#";

CalendarTime to_calendar(Timestamp t) { return std::chrono::floor<Seconds>(t); }

}  // namespace

const char* to_string(DealState s) {
  switch (s) {
    case DealState::kOffered: return "offered";
    case DealState::kAgreed: return "agreed";
    case DealState::kConfirmed: return "confirmed";
    case DealState::kCancelled: return "cancelled";
    case DealState::kExpired: return "expired";
  }
  return "?";
}

ResourceAgentConfig ResourceAgentConfig::from_json(const nlohmann::json& j) {
  ResourceAgentConfig c;
  c.resource_id = j.at("resource_id").get<std::string>();
  if (j.contains("profile")) c.profile = rfql::profile_from_json(j.at("profile"));
  const auto& band = j.at("pricing");
  c.pricing.start_price = Money::parse(band.at("start_price").get<std::string>());
  c.pricing.min_price = Money::parse(band.at("min_price").get<std::string>());
  c.pricing.anticipated_rounds = band.value("anticipated_rounds", std::int64_t{3});
  c.pricing.best_offer_enabled = band.value("best_offer", true);
  if (band.value("formula", std::string("load-scaled")) == "literal") {
    c.pricing.formula = pricing::DecrementFormula::kLiteral;
  }
  c.pricing.validate();
  c.hold_timeout = Millis(static_cast<std::int64_t>(j.value("hold_timeout", 60.0) * 1000));
  c.sweep_interval = Millis(static_cast<std::int64_t>(j.value("sweep_interval", 1.0) * 1000));
  c.offer_ttl = Millis(static_cast<std::int64_t>(j.value("offer_ttl", 600.0) * 1000));
  c.bank_id = j.value("bank_id", std::string("bank"));
  c.address = j.value("listen", std::string{});
  if (c.hold_timeout <= Millis{0}) throw ConfigError("hold_timeout must be > 0");
  return c;
}

ResourceAgent::ResourceAgent(ResourceAgentConfig config, std::unique_ptr<queuesim::QueuePlugin> queue,
                             std::shared_ptr<const signing::KeyRing> keys, signing::Signer signer,
                             std::shared_ptr<harness::RegistrySink> registry)
    : Agent(config.resource_id),
      config_(std::move(config)),
      queue_(std::move(queue)),
      keys_(std::move(keys)),
      signer_(std::move(signer)),
      registry_(std::move(registry)) {
  if (!queue_) throw ConfigError("resource agent needs a queue");
  if (!keys_) throw ConfigError("resource agent needs a key ring");
  config_.pricing.validate();
}

const PendingDeal* ResourceAgent::deal(const std::string& reservation_id) const {
  auto it = deals_.find(reservation_id);
  return it == deals_.end() ? nullptr : &it->second;
}

pricing::LoadSnapshot ResourceAgent::load_at(std::int64_t at, std::int64_t cores, std::int64_t duration) const {
  return pricing::LoadSnapshot(queue_->availability(at, cores, duration).load);
}

std::int64_t ResourceAgent::now_log(Context& ctx) const { return queuesim::log_time(queue_->clock(), ctx.now()); }

void ResourceAgent::on_start(Context& ctx) {
  ctx.set_timer(config_.sweep_interval, "sweep");
  if (registry_) {
    registry_->heartbeat(id(), config_.address, ctx.now());
    ctx.set_timer(config_.heartbeat_interval, "heartbeat");
  }
}

void ResourceAgent::on_timer(runtime::TimerId, const std::string& tag, Context& ctx) {
  if (tag == "sweep") {
    expire_holds(ctx);
    drop_stale_offers(ctx.now());
    ctx.set_timer(config_.sweep_interval, "sweep");
  } else if (tag == "heartbeat") {
    if (registry_) registry_->heartbeat(id(), config_.address, ctx.now());
    ctx.set_timer(config_.heartbeat_interval, "heartbeat");
  } else if (tag.rfind("bank-retry|", 0) == 0) {
    auto it = bank_outbox_.find(tag.substr(11));
    if (it != bank_outbox_.end()) send_to_bank(it->second.message, ctx);
  }
}

void ResourceAgent::on_message(const AclMessage& msg, Context& ctx) {
  if (msg.sender == config_.bank_id) {
    bank_reply(msg, ctx);
    return;
  }
  switch (msg.performative) {
    case Performative::kCallForProposals: handle_cfp(msg, ctx); break;
    case Performative::kAcceptProposal: handle_accept(msg, ctx); break;
    case Performative::kConfirm: handle_confirm(msg, ctx); break;
    case Performative::kCancel: handle_cancel(msg, ctx); break;
    case Performative::kRejectProposal:
      // Proposals stay valid until they expire; a rejected best offer may still be approved.
      break;
    default: refuse(msg, "unexpected", ctx); break;
  }
}

void ResourceAgent::refuse(const AclMessage& msg, const std::string& reason, Context& ctx, const std::string& ref) {
  ctx.send(runtime::reply_to(msg, Performative::kRefuse, protocol::ReasonContent{reason, ref}));
}

void ResourceAgent::drop_stale_offers(Timestamp now) {
  std::erase_if(offers_, [&](const auto& kv) { return kv.second.expires_at < now; });
}

void ResourceAgent::handle_cfp(const AclMessage& msg, Context& ctx) {
  const auto* rfq = std::get_if<protocol::RfqContent>(&msg.content);
  if (!rfq || !rfql::validate_request(rfq->request).empty()) {
    refuse(msg, "malformed", ctx);
    return;
  }
  const auto& req = rfq->request;
  auto record_refusal = [&](const char* reason) {
    ctx.record({{"kind", "cfp_refused"},
                {"conversation", msg.conversation_id},
                {"round", rfq->round},
                {"reason", reason}});
    refuse(msg, reason, ctx);
  };
  if (!rfql::match_static(config_.profile, req) || req.requested_cores() > queue_->total_cores()) {
    record_refusal("static-mismatch");
    return;
  }
  const auto& clock = queue_->clock();
  if (ctx.now() < clock.system_start) {
    record_refusal("unavailable");
    return;
  }
  const std::int64_t now = now_log(ctx);
  std::int64_t from = now;
  if (req.earliest_start && Timestamp(*req.earliest_start) > ctx.now()) {
    from = queuesim::log_time(clock, Timestamp(*req.earliest_start));
  }
  const auto latest_cal = rfql::latest_start(req);
  if (!latest_cal || Timestamp(*latest_cal) < ctx.now()) {
    record_refusal("unavailable");
    return;
  }
  const std::int64_t latest = queuesim::log_time(clock, Timestamp(*latest_cal));
  const std::int64_t cores = req.requested_cores();
  const std::int64_t wall = *req.wall_time;
  const auto start = queue_->earliest_feasible_start(from, latest, cores, wall);
  if (!start) {
    record_refusal("unavailable");
    return;
  }

  const auto load = load_at(*start, cores, wall);
  const Money requested = *req.cpu_hour_cost;
  const auto decision = pricing::make_offer(config_.pricing, load, requested);
  const Money attractiveness = pricing::attractiveness(config_.pricing, load);
  last_attractiveness_ = attractiveness;
  if (std::holds_alternative<pricing::Decline>(decision)) {
    record_refusal("below-floor");
    return;
  }

  protocol::Offer offer;
  offer.offer_id = fmt::format("{}-o{}", id(), next_offer_++);
  offer.resource_id = id();
  offer.unit_index = rfq->unit_index;
  offer.round = rfq->round;
  offer.proposed_start = to_calendar(queuesim::wall_time_at(clock, *start));
  if (const auto* bid = std::get_if<pricing::Bid>(&decision)) {
    offer.price = bid->price;
    offer.meets_requirements = true;
  } else {
    offer.price = std::get<pricing::BestOffer>(decision).price;
    offer.meets_requirements = false;
  }

  offers_[offer.offer_id] =
      LiveOffer{offer, req, msg.sender, msg.conversation_id, *start, ctx.now() + config_.offer_ttl};
  ctx.record({{"kind", "offer"},
              {"conversation", msg.conversation_id},
              {"user", msg.sender},
              {"unit", rfq->unit_index},
              {"round", rfq->round},
              {"offer_id", offer.offer_id},
              {"requested", requested.to_string()},
              {"price", offer.price.to_string()},
              {"min_price", config_.pricing.min_price.to_string()},
              {"meets_requirements", offer.meets_requirements},
              {"load", load.as_double()},
              {"attractiveness", attractiveness.to_string()},
              {"start_log", *start}});
  ctx.send(runtime::reply_to(msg, Performative::kPropose, protocol::OfferContent{offer}));
}

void ResourceAgent::handle_accept(const AclMessage& msg, Context& ctx) {
  const auto* accept = std::get_if<protocol::AcceptContent>(&msg.content);
  if (!accept) {
    refuse(msg, "malformed", ctx);
    return;
  }
  drop_stale_offers(ctx.now());
  auto it = offers_.find(accept->offer_id);
  if (it == offers_.end() || it->second.user_id != msg.sender) {
    refuse(msg, "unknown-offer", ctx, accept->offer_id);
    return;
  }
  LiveOffer live = std::move(it->second);
  // One reservation per unit: accepting any proposal retires the others in the conversation.
  std::erase_if(offers_, [&](const auto& kv) {
    return kv.second.conversation_id == live.conversation_id && kv.second.user_id == live.user_id;
  });

  const std::int64_t cores = live.request.requested_cores();
  const std::int64_t wall = *live.request.wall_time;
  std::optional<std::string> rid;
  if (live.start_log >= now_log(ctx)) rid = queue_->reserve(live.start_log, cores, wall);
  if (!rid) {
    ctx.record({{"kind", "accept_refused"}, {"conversation", live.conversation_id}, {"offer_id", live.offer.offer_id}});
    refuse(msg, "unavailable", ctx, accept->offer_id);
    return;
  }
  const Timestamp hold_until = ctx.now() + config_.hold_timeout;
  queue_->hold(*rid, hold_until);

  PendingDeal d;
  d.offer = live.offer;
  d.request = live.request;
  d.user_id = live.user_id;
  d.conversation_id = live.conversation_id;
  d.reservation_id = *rid;
  d.start_log = live.start_log;
  d.state = DealState::kAgreed;
  d.hold_until = hold_until;
  deals_.emplace(*rid, std::move(d));
  ctx.record({{"kind", "agree"},
              {"conversation", live.conversation_id},
              {"reservation_id", *rid},
              {"hold_until", to_epoch_ms(hold_until)}});
  ctx.send(runtime::reply_to(msg, Performative::kAgree, protocol::AgreeContent{*rid, hold_until}));
}

std::vector<std::string> ResourceAgent::expire_holds(Context& ctx) {
  auto expired = queue_->expire_holds(ctx.now());
  for (const auto& rid : expired) {
    auto it = deals_.find(rid);
    if (it != deals_.end()) it->second.state = DealState::kExpired;
    ctx.record({{"kind", "hold_expired"}, {"reservation_id", rid}});
  }
  return expired;
}

void ResourceAgent::handle_confirm(const AclMessage& msg, Context& ctx) {
  const auto* confirm = std::get_if<protocol::ConfirmContent>(&msg.content);
  if (!confirm) {
    refuse(msg, "malformed", ctx);
    return;
  }
  protocol::DealTerms terms;
  try {
    terms = protocol::DealTerms::from_payload(confirm->signed_document.payload);
  } catch (const std::exception&) {
    refuse(msg, "bad-signature", ctx);
    return;
  }
  expire_holds(ctx);
  auto it = deals_.find(terms.reservation_id);
  if (it == deals_.end() || it->second.state == DealState::kExpired || it->second.state == DealState::kCancelled) {
    ctx.send(runtime::reply_to(msg, Performative::kCancel,
                               protocol::CancelContent{"expired", terms.reservation_id, std::nullopt}));
    return;
  }
  PendingDeal& d = it->second;
  if (d.user_id != msg.sender) {
    refuse(msg, "not-owner", ctx, terms.reservation_id);
    return;
  }
  if (d.state == DealState::kConfirmed) {
    ctx.send(runtime::reply_to(msg, Performative::kConfirm, protocol::ConfirmContent{*d.settlement}));
    return;
  }
  const bool terms_match = terms.user_id == d.user_id && terms.resource_id == id() && terms.price == d.offer.price &&
                           terms.proposed_start == d.offer.proposed_start;
  const std::string signer = d.user_id;
  if (!terms_match || !keys_->verify_all(confirm->signed_document, std::span(&signer, 1))) {
    refuse(msg, terms_match ? "bad-signature" : "terms-mismatch", ctx, terms.reservation_id);
    return;
  }
  queue_->confirm(d.reservation_id);
  d.state = DealState::kConfirmed;
  auto settlement = confirm->signed_document;
  signer_.sign(settlement);
  d.settlement = settlement;
  ctx.record({{"kind", "confirmed"},
              {"conversation", d.conversation_id},
              {"reservation_id", d.reservation_id},
              {"price", d.offer.price.to_string()}});
  ctx.send(runtime::reply_to(msg, Performative::kConfirm, protocol::ConfirmContent{settlement}));
  notify_bank(d, ctx);
}

void ResourceAgent::notify_bank(PendingDeal& d, Context& ctx) {
  if (d.bank_notified) return;
  d.bank_notified = true;
  send_to_bank(runtime::make_message(Performative::kRequest, config_.bank_id, kSettlePrefix + d.reservation_id,
                                     protocol::BankUpdateContent{*d.settlement}),
               ctx);
}

void ResourceAgent::send_to_bank(AclMessage msg, Context& ctx) {
  auto& pending = bank_outbox_[msg.conversation_id];
  pending.message = msg;
  ++pending.attempts;
  ctx.send(std::move(msg));
}

void ResourceAgent::handle_cancel(const AclMessage& msg, Context& ctx) {
  const auto* cancel = std::get_if<protocol::CancelContent>(&msg.content);
  if (!cancel) {
    refuse(msg, "malformed", ctx);
    return;
  }
  expire_holds(ctx);
  auto it = deals_.find(cancel->reservation_id);
  if (it == deals_.end()) {
    refuse(msg, "unknown-reservation", ctx, cancel->reservation_id);
    return;
  }
  PendingDeal& d = it->second;
  if (d.user_id != msg.sender) {
    refuse(msg, "not-owner", ctx, d.reservation_id);
    return;
  }
  auto agree = [&] {
    ctx.record({{"kind", "cancelled"}, {"conversation", d.conversation_id}, {"reservation_id", d.reservation_id}});
    ctx.send(runtime::reply_to(msg, Performative::kAgree, protocol::AgreeContent{d.reservation_id, std::nullopt}));
  };
  switch (d.state) {
    case DealState::kOffered:
    case DealState::kAgreed:
      queue_->cancel(d.reservation_id);
      d.state = DealState::kCancelled;
      agree();
      return;
    case DealState::kCancelled:
    case DealState::kExpired:
      refuse(msg, "already-cancelled", ctx, d.reservation_id);
      return;
    case DealState::kConfirmed: break;
  }
  if (d.start_log <= now_log(ctx)) {
    refuse(msg, "started", ctx, d.reservation_id);
    return;
  }
  const std::string signer = d.user_id;
  bool valid = cancel->signed_document && keys_->verify_all(*cancel->signed_document, std::span(&signer, 1));
  if (valid) {
    try {
      const auto terms = protocol::CancelTerms::from_payload(cancel->signed_document->payload);
      valid = terms.reservation_id == d.reservation_id && terms.user_id == d.user_id && terms.resource_id == id();
    } catch (const std::exception&) {
      valid = false;
    }
  }
  if (!valid) {
    refuse(msg, "bad-signature", ctx, d.reservation_id);
    return;
  }
  queue_->cancel(d.reservation_id);
  d.state = DealState::kCancelled;
  auto doc = *cancel->signed_document;
  signer_.sign(doc);
  send_to_bank(runtime::make_message(Performative::kCancel, config_.bank_id, kCancelPrefix + d.reservation_id,
                                     protocol::CancelContent{cancel->reason, d.reservation_id, doc}),
               ctx);
  agree();
}

void ResourceAgent::bank_reply(const AclMessage& msg, Context& ctx) {
  const bool settle = msg.conversation_id.rfind(kSettlePrefix, 0) == 0;
  const bool cancel = msg.conversation_id.rfind(kCancelPrefix, 0) == 0;
  if (!settle && !cancel) return;
  if (msg.performative != Performative::kAgree && msg.performative != Performative::kRefuse) return;
  bank_outbox_.erase(msg.conversation_id);
  const auto rid = msg.conversation_id.substr(msg.conversation_id.find('#') + 1);
  const bool agreed = msg.performative == Performative::kAgree;
  auto it = deals_.find(rid);
  if (it != deals_.end()) {
    if (agreed && settle) it->second.settled = true;
    if (!agreed) it->second.flagged = true;
  }
  ctx.record({{"kind", settle ? "bank_settlement" : "bank_cancellation"}, {"reservation_id", rid}, {"agreed", agreed}});
}

void ResourceAgent::on_undeliverable(const AclMessage& msg, Context& ctx) {
  auto it = bank_outbox_.find(msg.conversation_id);
  if (msg.receiver != config_.bank_id || it == bank_outbox_.end()) return;
  if (it->second.attempts > config_.bank_retries) {
    const auto rid = msg.conversation_id.substr(msg.conversation_id.find('#') + 1);
    if (auto d = deals_.find(rid); d != deals_.end()) d->second.flagged = true;
    ctx.record({{"kind", "bank_unreachable"}, {"conversation", msg.conversation_id}});
    bank_outbox_.erase(it);
    return;
  }
  const auto backoff = config_.bank_retry_base * (1 << std::min(it->second.attempts - 1, 10));
  ctx.set_timer(backoff, "bank-retry|" + msg.conversation_id);
}

}  // namespace ramp::agents
