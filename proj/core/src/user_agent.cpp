#include "ramp/user_agent.hpp"

#include "ramp/bank.hpp"
#include "ramp/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>

namespace ramp::agents {

using nlohmann::json;
using protocol::Performative;

const char* to_string(ApprovalMode m) {
  switch (m) {
    case ApprovalMode::kAuto: return "auto";
    case ApprovalMode::kManualAll: return "manual-all";
    case ApprovalMode::kManualBestOfferOnly: return "manual-best-offer-only";
  }
  return "?";
}

ApprovalMode approval_mode_from_string(const std::string& s) {
  if (s == "auto") return ApprovalMode::kAuto;
  if (s == "manual" || s == "manual-all") return ApprovalMode::kManualAll;
  if (s == "manual-best-offer-only") return ApprovalMode::kManualBestOfferOnly;
  throw ConfigError("unknown approval mode '" + s + "'");
}

const char* to_string(AuctionPhase p) {
  switch (p) {
    case AuctionPhase::kBidding: return "bidding";
    case AuctionPhase::kAwaitingApproval: return "awaiting-approval";
    case AuctionPhase::kPhaseOne: return "phase-one";
    case AuctionPhase::kPhaseTwo: return "phase-two";
    case AuctionPhase::kDone: return "done";
    case AuctionPhase::kFailed: return "failed";
  }
  return "?";
}

const char* to_string(UnitStatus s) {
  switch (s) {
    case UnitStatus::kBidding: return "bidding";
    case UnitStatus::kPendingApproval: return "pending-approval";
    case UnitStatus::kApproved: return "approved";
    case UnitStatus::kAccepting: return "accepting";
    case UnitStatus::kAgreed: return "agreed";
    case UnitStatus::kConfirming: return "confirming";
    case UnitStatus::kConfirmed: return "confirmed";
    case UnitStatus::kFailed: return "failed";
    case UnitStatus::kCancelled: return "cancelled";
  }
  return "?";
}

void AuctionConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (round_interval <= Millis{0}) throw ConfigError("round_interval must be > 0");
  if (accept_timeout <= Millis{0} || confirm_retry <= Millis{0}) throw ConfigError("timeouts must be > 0");
}

std::vector<ReceivedOffer> rank_offers(std::vector<ReceivedOffer> offers, std::int64_t wall_time) {
  std::erase_if(offers, [](const ReceivedOffer& o) { return !o.offer.meets_requirements; });
  const Seconds wall(wall_time);
  std::sort(offers.begin(), offers.end(), [&](const ReceivedOffer& a, const ReceivedOffer& b) {
    if (a.offer.price != b.offer.price) return a.offer.price < b.offer.price;
    const auto ca = a.offer.proposed_start + wall;
    const auto cb = b.offer.proposed_start + wall;
    if (ca != cb) return ca < cb;
    const auto ra = a.offer.received_at.value_or(Timestamp::max());
    const auto rb = b.offer.received_at.value_or(Timestamp::max());
    if (ra != rb) return ra < rb;
    return a.message_id < b.message_id;
  });
  return offers;
}

signing::SignedDocument sign_unit(const rfql::RfqRequest& unit, const std::string& reservation_id, Money price,
                                  CalendarTime proposed_start, const std::string& resource_id,
                                  const signing::Signer& signer) {
  protocol::DealTerms terms{unit, reservation_id, price, proposed_start, signer.principal(), resource_id};
  signing::SignedDocument doc{terms.to_payload(), {}};
  signer.sign(doc);
  return doc;
}

UserAgent::UserAgent(UserAgentConfig config, std::shared_ptr<harness::ResourceDirectory> directory,
                     signing::Signer signer)
    : Agent(config.user_id), config_(std::move(config)), directory_(std::move(directory)), signer_(std::move(signer)) {
  if (!directory_) throw ConfigError("user agent needs a resource directory");
}

const Auction* UserAgent::auction(const std::string& id) const {
  auto it = auctions_.find(id);
  return it == auctions_.end() ? nullptr : &it->second;
}

UserAgent::UnitRef* UserAgent::find_ref(const std::string& conversation_id) {
  auto it = conversations_.find(conversation_id);
  return it == conversations_.end() ? nullptr : &it->second;
}

UnitState* UserAgent::find_unit(const std::string& conversation_id, Auction** auction) {
  auto* ref = find_ref(conversation_id);
  if (!ref) return nullptr;
  auto& a = auctions_.at(ref->auction_id);
  if (auction) *auction = &a;
  return &a.units[static_cast<std::size_t>(ref->unit)];
}

void UserAgent::set_phase(Auction& a, AuctionPhase p, Context& ctx) {
  a.phase = p;
  ctx.record({{"kind", "phase"}, {"auction_id", a.auction_id}, {"phase", to_string(p)}});
}

void UserAgent::set_status(Auction& a, UnitState& u, UnitStatus s, Context& ctx) {
  u.status = s;
  json r{{"kind", "unit_status"}, {"auction_id", a.auction_id}, {"unit", u.index}, {"status", to_string(s)}};
  if (u.chosen) {
    r["resource"] = u.chosen->resource_id;
    r["price"] = u.chosen->price.to_string();
  }
  if (!u.reservation_id.empty()) r["reservation_id"] = u.reservation_id;
  ctx.record(std::move(r));
}

std::string UserAgent::start_auction(rfql::RfqDocument doc, AuctionConfig config, Context& ctx) {
  if (auto v = rfql::validate_rfq(doc); !v.empty()) throw rfql::ValidationError(std::move(v));
  config.validate();

  const auto auction_id = fmt::format("{}-a{}", id(), next_auction_++);
  Auction a;
  a.auction_id = auction_id;
  a.config = config;
  a.started_at = ctx.now();
  for (std::size_t i = 0; i < doc.requests.size(); ++i) {
    UnitState u;
    u.index = static_cast<int>(i);
    u.conversation_id = protocol::new_conversation_id(auction_id, u.index);
    u.original = doc.requests[i];
    u.current = doc.requests[i];
    conversations_[u.conversation_id] = UnitRef{auction_id, u.index};
    a.units.push_back(std::move(u));
  }
  a.doc = std::move(doc);
  auto& stored = auctions_.emplace(auction_id, std::move(a)).first->second;

  for (const auto& e : directory_->alive(ctx.now())) stored.resources.push_back(e.resource_id);
  ctx.record({{"kind", "auction_started"},
              {"auction_id", auction_id},
              {"units", stored.units.size()},
              {"rounds", config.rounds},
              {"round_interval_ms", config.round_interval.count()},
              {"approval", to_string(config.approval)},
              {"resources", stored.resources.size()},
              {"request_price", stored.units.front().original.cpu_hour_cost->to_string()}});
  if (stored.resources.empty()) {
    fail(stored, "no resources", ctx);
    return auction_id;
  }
  broadcast(stored, ctx);
  return auction_id;
}

void UserAgent::broadcast(Auction& a, Context& ctx) {
  ++a.round;
  // Membership is re-read every round so late joiners can bid.
  if (a.round > 1) {
    std::vector<std::string> now_alive;
    for (const auto& e : directory_->alive(ctx.now())) now_alive.push_back(e.resource_id);
    if (!now_alive.empty()) a.resources = std::move(now_alive);
  }
  for (auto& u : a.units) {
    RoundRecord r;
    r.round = a.round;
    r.request_price = *u.current.cpu_hour_cost;
    r.opened_at = ctx.now();
    for (const auto& resource : a.resources) {
      auto msg = runtime::make_message(Performative::kCallForProposals, resource, u.conversation_id,
                                       protocol::RfqContent{u.current, u.index, a.round});
      cfp_sent_[ctx.send(std::move(msg))] = ctx.now();
      ++r.cfps_sent;
    }
    u.rounds.push_back(std::move(r));
    ctx.record({{"kind", "round_opened"},
                {"auction_id", a.auction_id},
                {"unit", u.index},
                {"round", a.round},
                {"request_price", u.current.cpu_hour_cost->to_string()}});
  }
  a.round_timer = ctx.set_timer(a.config.round_interval, "round|" + a.auction_id);
}

void UserAgent::on_propose(const AclMessage& msg, Auction& a, UnitState& u, Context& ctx) {
  ReceivedOffer ro{std::get<protocol::OfferContent>(msg.content).offer, msg.message_id};
  ro.offer.received_at = ctx.now();
  if (msg.in_reply_to) {
    if (auto it = cfp_sent_.find(*msg.in_reply_to); it != cfp_sent_.end()) {
      ctx.record({{"kind", "response"},
                  {"auction_id", a.auction_id},
                  {"unit", u.index},
                  {"resource", msg.sender},
                  {"response_ms", (ctx.now() - it->second).count()}});
      cfp_sent_.erase(it);
    }
  }
  if (a.phase != AuctionPhase::kBidding) {
    ctx.record({{"kind", "late_offer"}, {"auction_id", a.auction_id}, {"unit", u.index}, {"resource", msg.sender}});
    return;
  }
  auto& round = u.rounds.back();
  round.last_response_at = ctx.now();
  round.offers.push_back(ro);

  const auto& offer = ro.offer;
  bool conforming = offer.meets_requirements && offer.resource_id == msg.sender && offer.price > Money{} &&
                    offer.price <= *u.current.cpu_hour_cost;
  if (conforming && u.current.deadline) {
    conforming = offer.proposed_start + Seconds(*u.current.wall_time) <= *u.current.deadline;
  }
  if (conforming) {
    auto it = u.offers.find(msg.sender);
    if (it == u.offers.end() || offer.price < it->second.offer.price) u.offers[msg.sender] = ro;
    return;
  }
  if (!offer.meets_requirements && offer.resource_id == msg.sender) {
    u.best_offers[msg.sender] = ro;
  }
  u.to_reject.push_back(std::move(ro));
}

void UserAgent::close_round(Auction& a, Context& ctx) {
  for (auto& u : a.units) {
    for (const auto& r : u.to_reject) {
      auto reject = runtime::make_message(Performative::kRejectProposal, r.offer.resource_id, u.conversation_id,
                                          protocol::ReasonContent{"does not meet requirements", r.offer.offer_id});
      reject.in_reply_to = r.message_id;
      ctx.send(std::move(reject));
    }
    u.to_reject.clear();

    std::vector<ReceivedOffer> all;
    for (const auto& [_, o] : u.offers) all.push_back(o);
    const auto ranked = rank_offers(std::move(all), *u.current.wall_time);
    const auto& round = u.rounds.back();
    auto offers = json::array();
    for (const auto& o : round.offers) offers.push_back(received_offer_to_json(o));
    json rec{{"kind", "round_closed"},
             {"auction_id", a.auction_id},
             {"unit", u.index},
             {"round", round.round},
             {"request_price", round.request_price.to_string()},
             {"opened_at", to_epoch_ms(round.opened_at)},
             {"cfps", round.cfps_sent},
             {"refusals", round.refusals},
             {"offers", offers}};
    if (round.last_response_at) rec["last_response_at"] = to_epoch_ms(*round.last_response_at);
    if (!ranked.empty()) {
      rec["best"] = ranked.front().offer.price.to_string();
      rec["best_resource"] = ranked.front().offer.resource_id;
    }
    ctx.record(std::move(rec));

    if (a.round < a.config.rounds && !ranked.empty() && ranked.front().offer.price < *u.current.cpu_hour_cost) {
      u.current.cpu_hour_cost = ranked.front().offer.price;
    }
  }
  if (a.round < a.config.rounds) {
    broadcast(a, ctx);
  } else {
    close_bidding(a, ctx);
  }
}

void UserAgent::close_bidding(Auction& a, Context& ctx) {
  a.bidding_closed_at = ctx.now();
  bool pending = false;
  for (auto& u : a.units) {
    std::vector<ReceivedOffer> all;
    for (const auto& [_, o] : u.offers) all.push_back(o);
    u.ranked = rank_offers(std::move(all), *u.current.wall_time);
    u.cursor = 0;

    std::optional<ReceivedOffer> cheapest_best;
    for (const auto& [_, o] : u.best_offers) {
      if (!cheapest_best || o.offer.price < cheapest_best->offer.price) cheapest_best = o;
    }
    const auto mode = a.config.approval;
    if (!u.ranked.empty() && mode != ApprovalMode::kManualAll) {
      set_status(a, u, UnitStatus::kApproved, ctx);
      continue;
    }
    if (!u.ranked.empty()) {
      u.pending_approval = u.ranked.front();
    } else if (cheapest_best && mode != ApprovalMode::kAuto) {
      u.pending_approval = cheapest_best;
    } else {
      fail(a, fmt::format("no acceptable offers for unit {}", u.index), ctx);
      return;
    }
    pending = true;
    set_status(a, u, UnitStatus::kPendingApproval, ctx);
    ctx.record({{"kind", "approval_requested"},
                {"auction_id", a.auction_id},
                {"unit", u.index},
                {"offer", received_offer_to_json(*u.pending_approval)}});
  }
  if (pending) {
    set_phase(a, AuctionPhase::kAwaitingApproval, ctx);
    a.approval_timer = ctx.set_timer(a.config.approval_timeout, "approval|" + a.auction_id);
    return;
  }
  start_phase_one(a, ctx);
}

void UserAgent::approve(const std::string& auction_id, int unit, bool accept, Context& ctx) {
  auto it = auctions_.find(auction_id);
  if (it == auctions_.end()) throw NotFound("unknown auction " + auction_id);
  auto& a = it->second;
  if (unit < 0 || static_cast<std::size_t>(unit) >= a.units.size()) throw NotFound("unknown unit");
  if (a.closed()) throw Conflict("auction closed");
  auto& u = a.units[static_cast<std::size_t>(unit)];
  if (a.phase != AuctionPhase::kAwaitingApproval || u.status != UnitStatus::kPendingApproval) {
    throw Conflict("unit is not awaiting approval");
  }
  ctx.record({{"kind", "approval"}, {"auction_id", a.auction_id}, {"unit", unit}, {"accept", accept}});
  if (!accept) {
    set_status(a, u, UnitStatus::kFailed, ctx);
    fail(a, fmt::format("unit {} rejected by user", unit), ctx);
    return;
  }
  if (!u.pending_approval->offer.meets_requirements) u.ranked = {*u.pending_approval};
  u.pending_approval.reset();
  set_status(a, u, UnitStatus::kApproved, ctx);
  const bool waiting = std::any_of(a.units.begin(), a.units.end(),
                                   [](const UnitState& x) { return x.status == UnitStatus::kPendingApproval; });
  if (!waiting) {
    ctx.cancel_timer(a.approval_timer);
    start_phase_one(a, ctx);
  }
}

void UserAgent::start_phase_one(Auction& a, Context& ctx) {
  set_phase(a, AuctionPhase::kPhaseOne, ctx);
  for (auto& u : a.units) {
    if (a.phase != AuctionPhase::kPhaseOne) return;
    send_accept(a, u, ctx);
  }
}

void UserAgent::send_accept(Auction& a, UnitState& u, Context& ctx) {
  if (u.cursor >= u.ranked.size()) {
    set_status(a, u, UnitStatus::kFailed, ctx);
    fail(a, fmt::format("unit {} exhausted its offers", u.index), ctx);
    return;
  }
  const auto& candidate = u.ranked[u.cursor];
  u.chosen = candidate.offer;
  auto msg = runtime::make_message(Performative::kAcceptProposal, candidate.offer.resource_id, u.conversation_id,
                                   protocol::AcceptContent{candidate.offer.offer_id});
  msg.in_reply_to = candidate.message_id;
  u.accept_message = ctx.send(std::move(msg));
  set_status(a, u, UnitStatus::kAccepting, ctx);
  u.reply_timer = ctx.set_timer(a.config.accept_timeout, "accept|" + u.conversation_id);
}

void UserAgent::next_candidate(Auction& a, UnitState& u, Context& ctx) {
  ctx.cancel_timer(u.reply_timer);
  u.accept_message.clear();
  ++u.cursor;
  send_accept(a, u, ctx);
}

void UserAgent::start_phase_two(Auction& a, Context& ctx) {
  set_phase(a, AuctionPhase::kPhaseTwo, ctx);
  for (auto& u : a.units) {
    u.signed_document = sign_unit(u.current, u.reservation_id, u.chosen->price, u.chosen->proposed_start,
                                  u.chosen->resource_id, signer_);
    set_status(a, u, UnitStatus::kConfirming, ctx);
    send_confirm(a, u, ctx);
  }
}

void UserAgent::send_confirm(Auction& a, UnitState& u, Context& ctx) {
  auto msg = runtime::make_message(Performative::kConfirm, u.chosen->resource_id, u.conversation_id,
                                   protocol::ConfirmContent{*u.signed_document});
  u.confirm_messages.insert(ctx.send(std::move(msg)));
  u.reply_timer = ctx.set_timer(a.config.confirm_retry, "confirm|" + u.conversation_id);
}

void UserAgent::finish(Auction& a, Context& ctx) {
  a.finished_at = ctx.now();
  json units = json::array();
  for (const auto& u : a.units) {
    json ju{{"unit", u.index},
            {"status", to_string(u.status)},
            {"request_price", u.original.cpu_hour_cost->to_string()},
            {"cores", u.original.requested_cores()}};
    if (u.chosen && u.status == UnitStatus::kConfirmed) {
      ju["resource"] = u.chosen->resource_id;
      ju["price"] = u.chosen->price.to_string();
      ju["reservation_id"] = u.reservation_id;
      ju["meets_requirements"] = u.chosen->meets_requirements;
    }
    units.push_back(std::move(ju));
  }
  json rec{{"kind", "auction_finished"},
           {"auction_id", a.auction_id},
           {"outcome", a.phase == AuctionPhase::kDone ? "AllConfirmed" : "Failed"},
           {"rounds", a.config.rounds},
           {"started_at", to_epoch_ms(a.started_at)},
           {"finished_at", to_epoch_ms(ctx.now())},
           {"failure", a.failure},
           {"units", units}};
  if (a.bidding_closed_at) rec["bidding_closed_at"] = to_epoch_ms(*a.bidding_closed_at);
  ctx.record(std::move(rec));
}

void UserAgent::send_cancel(const std::string& resource, const std::string& conversation,
                            const std::string& reservation_id, const std::string& reason, Context& ctx) {
  if (!released_.insert(reservation_id).second) return;
  protocol::CancelTerms terms{reservation_id, id(), resource};
  signing::SignedDocument doc{terms.to_payload(), {}};
  signer_.sign(doc);
  auto msg = runtime::make_message(Performative::kCancel, resource, conversation,
                                   protocol::CancelContent{reason, reservation_id, doc});
  cancel_messages_[ctx.send(std::move(msg))] = reservation_id;
}

void UserAgent::fail(Auction& a, const std::string& reason, Context& ctx) {
  if (a.closed()) return;
  a.failure = reason;
  ctx.cancel_timer(a.round_timer);
  ctx.cancel_timer(a.approval_timer);
  for (auto& u : a.units) {
    ctx.cancel_timer(u.reply_timer);
    switch (u.status) {
      case UnitStatus::kAgreed:
      case UnitStatus::kConfirming:
      case UnitStatus::kConfirmed:
        send_cancel(u.chosen->resource_id, u.conversation_id, u.reservation_id, "auction failed", ctx);
        if (auto p = purchases_.find(u.reservation_id); p != purchases_.end()) p->second.status = "cancelling";
        set_status(a, u, UnitStatus::kCancelled, ctx);
        break;
      case UnitStatus::kFailed:
      case UnitStatus::kCancelled: break;
      default: set_status(a, u, UnitStatus::kFailed, ctx); break;
    }
  }
  set_phase(a, AuctionPhase::kFailed, ctx);
  finish(a, ctx);
}

void UserAgent::cancel_purchase(const std::string& reservation_id, Context& ctx) {
  auto it = purchases_.find(reservation_id);
  if (it == purchases_.end()) throw NotFound("unknown reservation " + reservation_id);
  auto& p = it->second;
  if (p.status != "confirmed") throw Conflict("reservation is " + p.status);
  released_.erase(reservation_id);
  send_cancel(p.resource_id, protocol::new_conversation_id(p.auction_id, p.unit), reservation_id, "user request", ctx);
  p.status = "cancelling";
  ctx.record({{"kind", "cancel_requested"}, {"reservation_id", reservation_id}});
}

void UserAgent::request_balance(BalanceCallback done, Context& ctx) {
  signing::SignedDocument doc{bank::balance_request_payload(config_.user_id, next_nonce_++), {}};
  signer_.sign(doc);
  auto msg = runtime::make_message(Performative::kRequest, config_.bank_id,
                                   fmt::format("balance#{}#{}", config_.user_id, next_nonce_ - 1),
                                   protocol::BalanceContent{doc, std::nullopt});
  const auto id = ctx.send(std::move(msg));
  balance_requests_[id] = std::move(done);
}

void UserAgent::on_message(const AclMessage& msg, Context& ctx) {
  if (msg.in_reply_to) {
    if (auto b = balance_requests_.find(*msg.in_reply_to); b != balance_requests_.end()) {
      auto done = std::move(b->second);
      balance_requests_.erase(b);
      const auto* content = std::get_if<protocol::BalanceContent>(&msg.content);
      done(msg.performative == Performative::kAgree && content ? content->statement : std::nullopt);
      return;
    }
  }
  switch (msg.performative) {
    case Performative::kPropose: {
      Auction* a = nullptr;
      auto* u = find_unit(msg.conversation_id, &a);
      if (u && std::holds_alternative<protocol::OfferContent>(msg.content)) on_propose(msg, *a, *u, ctx);
      break;
    }
    case Performative::kRefuse: on_refuse(msg, ctx); break;
    case Performative::kAgree: on_agree(msg, ctx); break;
    case Performative::kConfirm: on_confirm(msg, ctx); break;
    case Performative::kCancel: on_cancel(msg, ctx); break;
    default: break;
  }
}

void UserAgent::on_refuse(const AclMessage& msg, Context& ctx) {
  const std::string reply_to = msg.in_reply_to.value_or("");
  if (auto c = cancel_messages_.find(reply_to); c != cancel_messages_.end()) {
    if (auto p = purchases_.find(c->second); p != purchases_.end() && p->second.status == "cancelling") {
      p->second.status = "confirmed";
      if (const auto* r = std::get_if<protocol::ReasonContent>(&msg.content)) p->second.note = r->reason;
    }
    ctx.record({{"kind", "cancel_refused"}, {"reservation_id", c->second}});
    cancel_messages_.erase(c);
    return;
  }
  Auction* a = nullptr;
  auto* u = find_unit(msg.conversation_id, &a);
  if (!u) return;
  if (cfp_sent_.erase(reply_to) && a->phase == AuctionPhase::kBidding && !u->rounds.empty()) {
    ++u->rounds.back().refusals;
    u->rounds.back().last_response_at = ctx.now();
    return;
  }
  if (u->status == UnitStatus::kAccepting && reply_to == u->accept_message) {
    next_candidate(*a, *u, ctx);
    return;
  }
  if (u->status == UnitStatus::kConfirming && u->confirm_messages.count(reply_to)) {
    fail(*a, fmt::format("unit {} refused at commit", u->index), ctx);
  }
}

void UserAgent::on_agree(const AclMessage& msg, Context& ctx) {
  const auto* agree = std::get_if<protocol::AgreeContent>(&msg.content);
  if (!agree) return;
  if (msg.sender == config_.bank_id) {
    if (auto p = purchases_.find(agree->reservation_id); p != purchases_.end()) p->second.status = "re-credited";
    ctx.record({{"kind", "recredited"}, {"reservation_id", agree->reservation_id}});
    return;
  }
  const std::string reply_to = msg.in_reply_to.value_or("");
  if (auto c = cancel_messages_.find(reply_to); c != cancel_messages_.end()) {
    if (auto p = purchases_.find(c->second); p != purchases_.end() && p->second.status == "cancelling") {
      p->second.status = "cancelled";
    }
    ctx.record({{"kind", "cancel_agreed"}, {"reservation_id", c->second}});
    cancel_messages_.erase(c);
    return;
  }
  Auction* a = nullptr;
  auto* u = find_unit(msg.conversation_id, &a);
  if (u && u->status == UnitStatus::kAccepting && reply_to == u->accept_message) {
    ctx.cancel_timer(u->reply_timer);
    u->reservation_id = agree->reservation_id;
    u->hold_until = agree->hold_until.value_or(ctx.now() + a->config.accept_timeout);
    set_status(*a, *u, UnitStatus::kAgreed, ctx);
    const bool all = std::all_of(a->units.begin(), a->units.end(),
                                 [](const UnitState& x) { return x.status == UnitStatus::kAgreed; });
    if (all) start_phase_two(*a, ctx);
    return;
  }
  // An Agree nobody is waiting for (we timed out or the auction failed): release the slot.
  send_cancel(msg.sender, msg.conversation_id, agree->reservation_id, "not needed", ctx);
}

void UserAgent::on_confirm(const AclMessage& msg, Context& ctx) {
  Auction* a = nullptr;
  auto* u = find_unit(msg.conversation_id, &a);
  const std::string reply_to = msg.in_reply_to.value_or("");
  if (!u || !u->confirm_messages.count(reply_to)) return;
  if (u->status != UnitStatus::kConfirming) {
    // The resource committed after we gave up on it; undo the purchase.
    send_cancel(msg.sender, msg.conversation_id, u->reservation_id, "auction failed", ctx);
    return;
  }
  ctx.cancel_timer(u->reply_timer);
  set_status(*a, *u, UnitStatus::kConfirmed, ctx);
  Purchase p;
  p.reservation_id = u->reservation_id;
  p.auction_id = a->auction_id;
  p.unit = u->index;
  p.resource_id = u->chosen->resource_id;
  p.price = u->chosen->price;
  p.proposed_start = u->chosen->proposed_start;
  p.amount = bank::compute_amount(u->current, u->chosen->price);
  purchases_[p.reservation_id] = p;
  const bool all = std::all_of(a->units.begin(), a->units.end(),
                               [](const UnitState& x) { return x.status == UnitStatus::kConfirmed; });
  if (all) {
    set_phase(*a, AuctionPhase::kDone, ctx);
    finish(*a, ctx);
  }
}

void UserAgent::on_cancel(const AclMessage& msg, Context& ctx) {
  Auction* a = nullptr;
  auto* u = find_unit(msg.conversation_id, &a);
  if (!u) return;
  if (u->status == UnitStatus::kConfirming && u->confirm_messages.count(msg.in_reply_to.value_or(""))) {
    fail(*a, fmt::format("unit {} hold expired before commit", u->index), ctx);
  }
}

void UserAgent::on_timer(runtime::TimerId id, const std::string& tag, Context& ctx) {
  const auto bar = tag.find('|');
  const auto kind = tag.substr(0, bar);
  const auto key = tag.substr(bar + 1);
  if (kind == "round" || kind == "approval") {
    auto it = auctions_.find(key);
    if (it == auctions_.end()) return;
    auto& a = it->second;
    if (kind == "round" && a.phase == AuctionPhase::kBidding && id == a.round_timer) close_round(a, ctx);
    if (kind == "approval" && a.phase == AuctionPhase::kAwaitingApproval && id == a.approval_timer) {
      fail(a, "approval timeout", ctx);
    }
    return;
  }
  Auction* a = nullptr;
  auto* u = find_unit(key, &a);
  if (!u || id != u->reply_timer) return;
  if (kind == "accept" && u->status == UnitStatus::kAccepting) {
    ctx.record({{"kind", "accept_timeout"}, {"auction_id", a->auction_id}, {"unit", u->index}});
    next_candidate(*a, *u, ctx);
  } else if (kind == "confirm" && u->status == UnitStatus::kConfirming) {
    if (ctx.now() + a->config.confirm_retry <= u->hold_until) {
      send_confirm(*a, *u, ctx);
    } else {
      fail(*a, fmt::format("unit {} commit timed out", u->index), ctx);
    }
  }
}

void UserAgent::on_undeliverable(const AclMessage& msg, Context& ctx) {
  if (auto b = balance_requests_.find(msg.message_id); b != balance_requests_.end()) {
    auto done = std::move(b->second);
    balance_requests_.erase(b);
    done(std::nullopt);
    return;
  }
  Auction* a = nullptr;
  auto* u = find_unit(msg.conversation_id, &a);
  if (!u) return;
  if (msg.performative == Performative::kCallForProposals && a->phase == AuctionPhase::kBidding) {
    cfp_sent_.erase(msg.message_id);
    ++u->rounds.back().refusals;
  } else if (msg.performative == Performative::kAcceptProposal && u->status == UnitStatus::kAccepting &&
             msg.message_id == u->accept_message) {
    next_candidate(*a, *u, ctx);
  }
  // Undeliverable Confirms are covered by the retry timer.
}

json received_offer_to_json(const ReceivedOffer& o) {
  auto j = protocol::offer_to_json(o.offer);
  j["message_id"] = o.message_id;
  return j;
}

json purchase_to_json(const Purchase& p) {
  return {{"reservation_id", p.reservation_id},
          {"auction_id", p.auction_id},
          {"unit", p.unit},
          {"resource_id", p.resource_id},
          {"price", p.price.to_string()},
          {"proposed_start", format_iso_datetime(p.proposed_start)},
          {"amount", p.amount.to_string()},
          {"status", p.status},
          {"note", p.note}};
}

json auction_to_json(const Auction& a, bool detailed) {
  json j{{"auction_id", a.auction_id},
         {"phase", to_string(a.phase)},
         {"round", a.round},
         {"rounds", a.config.rounds},
         {"round_interval", a.config.round_interval.count() / 1000.0},
         {"approval", to_string(a.config.approval)},
         {"units", a.units.size()},
         {"started_at", to_epoch_ms(a.started_at)},
         {"failure", a.failure}};
  if (a.finished_at) j["finished_at"] = to_epoch_ms(*a.finished_at);
  if (!detailed) return j;
  auto units = json::array();
  for (const auto& u : a.units) {
    json ju{{"unit", u.index},
            {"status", to_string(u.status)},
            {"request_price", u.original.cpu_hour_cost->to_string()},
            {"current_price", u.current.cpu_hour_cost->to_string()},
            {"request", rfql::request_to_json(u.original)}};
    auto rounds = json::array();
    for (const auto& r : u.rounds) {
      auto offers = json::array();
      for (const auto& o : r.offers) offers.push_back(received_offer_to_json(o));
      rounds.push_back({{"round", r.round},
                        {"request_price", r.request_price.to_string()},
                        {"refusals", r.refusals},
                        {"offers", offers}});
    }
    ju["rounds"] = rounds;
    std::vector<ReceivedOffer> all;
    for (const auto& [_, o] : u.offers) all.push_back(o);
    auto ranked = json::array();
    for (const auto& o : rank_offers(all, u.original.wall_time.value_or(0))) ranked.push_back(received_offer_to_json(o));
    ju["ranked_offers"] = ranked;
    if (!ranked.empty()) ju["best_so_far"] = ranked.front()["price"];
    if (u.pending_approval) ju["pending_approval"] = received_offer_to_json(*u.pending_approval);
    if (u.chosen) ju["chosen"] = protocol::offer_to_json(*u.chosen);
    if (!u.reservation_id.empty()) ju["reservation_id"] = u.reservation_id;
    units.push_back(std::move(ju));
  }
  j["unit_states"] = units;
  return j;
}

}  // namespace ramp::agents
