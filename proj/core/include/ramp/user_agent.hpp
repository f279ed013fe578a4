#pragma once

#include "ramp/registry.hpp"
#include "ramp/rfql.hpp"
#include "ramp/runtime.hpp"
#include "ramp/signing.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ramp::agents {

using protocol::AclMessage;
using runtime::Context;

enum class ApprovalMode { kAuto, kManualAll, kManualBestOfferOnly };
const char* to_string(ApprovalMode m);
/// "auto", "manual" (= manual-all), "manual-all", "manual-best-offer-only".
ApprovalMode approval_mode_from_string(const std::string& s);

enum class AuctionPhase { kBidding, kAwaitingApproval, kPhaseOne, kPhaseTwo, kDone, kFailed };
const char* to_string(AuctionPhase p);

enum class UnitStatus { kBidding, kPendingApproval, kApproved, kAccepting, kAgreed, kConfirming, kConfirmed, kFailed, kCancelled };
const char* to_string(UnitStatus s);

struct AuctionConfig {
  int rounds = 3;
  Millis round_interval{15000};
  ApprovalMode approval = ApprovalMode::kAuto;
  /// No answer to an AcceptProposal within this long counts as a Refuse.
  Millis accept_timeout{10000};
  /// Confirm is re-sent at this interval until the hold runs out.
  Millis confirm_retry{2000};
  /// A pending approval left unanswered this long fails the auction.
  Millis approval_timeout{600000};

  void validate() const;
};

/// An offer plus what the ranking needs to break arrival ties.
struct ReceivedOffer {
  protocol::Offer offer;
  std::string message_id;
};

/// Ascending price, then earlier completion (proposed start + wall time),
/// then earlier arrival, then message id. Best offers (meets_requirements
/// false) are left out.
std::vector<ReceivedOffer> rank_offers(std::vector<ReceivedOffer> offers, std::int64_t wall_time);

/// Canonical deal document signed by the user.
signing::SignedDocument sign_unit(const rfql::RfqRequest& unit, const std::string& reservation_id, Money price,
                                  CalendarTime proposed_start, const std::string& resource_id,
                                  const signing::Signer& signer);

struct RoundRecord {
  int round = 0;
  Money request_price;
  Timestamp opened_at{};
  std::optional<Timestamp> last_response_at;
  int cfps_sent = 0;
  int refusals = 0;
  std::vector<ReceivedOffer> offers;
};

struct UnitState {
  int index = 0;
  std::string conversation_id;
  rfql::RfqRequest original;
  rfql::RfqRequest current;
  std::vector<RoundRecord> rounds;
  /// Cheapest conforming offer per resource (the earliest one on price ties).
  std::map<std::string, ReceivedOffer> offers;
  /// Latest non-conforming (best) offer per resource.
  std::map<std::string, ReceivedOffer> best_offers;
  std::vector<ReceivedOffer> to_reject;
  std::vector<ReceivedOffer> ranked;
  std::size_t cursor = 0;
  std::optional<ReceivedOffer> pending_approval;
  UnitStatus status = UnitStatus::kBidding;
  std::optional<protocol::Offer> chosen;
  std::string accept_message;
  std::set<std::string> confirm_messages;
  std::string reservation_id;
  Timestamp hold_until{};
  std::optional<signing::SignedDocument> signed_document;
  runtime::TimerId reply_timer = 0;
};

struct Auction {
  std::string auction_id;
  rfql::RfqDocument doc;
  AuctionConfig config;
  AuctionPhase phase = AuctionPhase::kBidding;
  std::vector<UnitState> units;
  int round = 0;
  Timestamp started_at{};
  std::optional<Timestamp> bidding_closed_at;
  std::optional<Timestamp> finished_at;
  std::string failure;
  runtime::TimerId round_timer = 0;
  runtime::TimerId approval_timer = 0;
  std::vector<std::string> resources;

  bool closed() const { return phase == AuctionPhase::kDone || phase == AuctionPhase::kFailed; }
};

struct Purchase {
  std::string reservation_id;
  std::string auction_id;
  int unit = 0;
  std::string resource_id;
  Money price;
  CalendarTime proposed_start;
  Money amount;
  /// confirmed, cancelling, cancelled, re-credited
  std::string status = "confirmed";
  std::string note;
};

struct UserAgentConfig {
  std::string user_id;
  std::string bank_id = "bank";
};

/// Buys resources for one user: runs auctions, ranks offers, and drives the
/// two-phase commit across all units of a request.
class UserAgent final : public runtime::Agent {
 public:
  UserAgent(UserAgentConfig config, std::shared_ptr<harness::ResourceDirectory> directory, signing::Signer signer);

  /// Validates the document, broadcasts round-one CFPs, and returns the auction id.
  /// Throws rfql::ValidationError before sending anything if the document is invalid.
  std::string start_auction(rfql::RfqDocument doc, AuctionConfig config, Context& ctx);
  /// Accept or reject the offer awaiting approval for one unit.
  /// Throws NotFound for unknown auctions/units and Conflict when nothing is pending.
  void approve(const std::string& auction_id, int unit, bool accept, Context& ctx);
  /// Asks the resource to cancel a confirmed purchase. Throws NotFound / Conflict.
  void cancel_purchase(const std::string& reservation_id, Context& ctx);

  /// Asks the bank for a signed-for balance statement; `done` gets nullopt on refusal or no route.
  using BalanceCallback = std::function<void(std::optional<nlohmann::json>)>;
  void request_balance(BalanceCallback done, Context& ctx);

  const std::string& user_id() const { return config_.user_id; }
  const Auction* auction(const std::string& id) const;
  const std::map<std::string, Auction>& auctions() const { return auctions_; }
  const std::map<std::string, Purchase>& purchases() const { return purchases_; }

  void on_message(const AclMessage& msg, Context& ctx) override;
  void on_timer(runtime::TimerId id, const std::string& tag, Context& ctx) override;
  void on_undeliverable(const AclMessage& msg, Context& ctx) override;

 private:
  struct UnitRef {
    std::string auction_id;
    int unit = 0;
  };

  void broadcast(Auction& a, Context& ctx);
  void close_round(Auction& a, Context& ctx);
  void close_bidding(Auction& a, Context& ctx);
  void start_phase_one(Auction& a, Context& ctx);
  void send_accept(Auction& a, UnitState& u, Context& ctx);
  void next_candidate(Auction& a, UnitState& u, Context& ctx);
  void start_phase_two(Auction& a, Context& ctx);
  void send_confirm(Auction& a, UnitState& u, Context& ctx);
  void finish(Auction& a, Context& ctx);
  /// Fails the auction and cancels every reservation obtained so far.
  void fail(Auction& a, const std::string& reason, Context& ctx);
  void send_cancel(const std::string& resource, const std::string& conversation, const std::string& reservation_id,
                   const std::string& reason, Context& ctx);
  void set_phase(Auction& a, AuctionPhase p, Context& ctx);
  void set_status(Auction& a, UnitState& u, UnitStatus s, Context& ctx);

  void on_propose(const AclMessage& msg, Auction& a, UnitState& u, Context& ctx);
  void on_refuse(const AclMessage& msg, Context& ctx);
  void on_agree(const AclMessage& msg, Context& ctx);
  void on_confirm(const AclMessage& msg, Context& ctx);
  void on_cancel(const AclMessage& msg, Context& ctx);

  UnitRef* find_ref(const std::string& conversation_id);
  UnitState* find_unit(const std::string& conversation_id, Auction** auction);

  UserAgentConfig config_;
  std::shared_ptr<harness::ResourceDirectory> directory_;
  signing::Signer signer_;
  std::map<std::string, Auction> auctions_;
  std::map<std::string, UnitRef> conversations_;
  std::map<std::string, Timestamp> cfp_sent_;
  /// Outstanding Cancel message id -> reservation id.
  std::map<std::string, std::string> cancel_messages_;
  /// Reservations we have asked to be released.
  std::set<std::string> released_;
  std::map<std::string, Purchase> purchases_;
  std::map<std::string, BalanceCallback> balance_requests_;
  std::uint64_t next_auction_ = 1;
  std::uint64_t next_nonce_ = 1;
};

nlohmann::json auction_to_json(const Auction& a, bool detailed = true);
nlohmann::json purchase_to_json(const Purchase& p);
nlohmann::json received_offer_to_json(const ReceivedOffer& o);

}  // namespace ramp::agents
