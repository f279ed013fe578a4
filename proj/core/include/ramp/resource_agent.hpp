#pragma once

#include "ramp/machine.hpp"
#include "ramp/pricing.hpp"
#include "ramp/registry.hpp"
#include "ramp/rfql.hpp"
#include "ramp/runtime.hpp"
#include "ramp/signing.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ramp::agents {

using protocol::AclMessage;
using runtime::Context;

struct ResourceAgentConfig {
  std::string resource_id;
  rfql::ResourceProfile profile;
  pricing::PricingConfig pricing;
  Millis hold_timeout{60000};
  Millis sweep_interval{1000};
  /// How long a proposal stays acceptable.
  Millis offer_ttl{600000};
  std::string bank_id = "bank";
  /// Advertised to the registry.
  std::string address;
  Millis heartbeat_interval{5000};
  int bank_retries = 5;
  Millis bank_retry_base{1000};

  /// Reads everything except the queue plug-in and keys.
  static ResourceAgentConfig from_json(const nlohmann::json& j);
};

enum class DealState { kOffered, kAgreed, kConfirmed, kCancelled, kExpired };
const char* to_string(DealState s);

struct PendingDeal {
  protocol::Offer offer;
  rfql::RfqRequest request;
  std::string user_id;
  std::string conversation_id;
  std::string reservation_id;
  std::int64_t start_log = 0;
  DealState state = DealState::kAgreed;
  Timestamp hold_until{};
  /// user + resource signatures, as sent to the bank.
  std::optional<signing::SignedDocument> settlement;
  bool bank_notified = false;
  bool settled = false;
  /// Bank refused or stayed unreachable; needs an operator.
  bool flagged = false;
};

/// Sells slots on one homogeneous machine partition.
class ResourceAgent final : public runtime::Agent {
 public:
  ResourceAgent(ResourceAgentConfig config, std::unique_ptr<queuesim::QueuePlugin> queue,
                std::shared_ptr<const signing::KeyRing> keys, signing::Signer signer,
                std::shared_ptr<harness::RegistrySink> registry = nullptr);

  const ResourceAgentConfig& config() const { return config_; }
  queuesim::QueuePlugin& queue() { return *queue_; }
  const queuesim::QueuePlugin& queue() const { return *queue_; }
  const std::map<std::string, PendingDeal>& deals() const { return deals_; }
  const PendingDeal* deal(const std::string& reservation_id) const;
  std::size_t live_offers() const { return offers_.size(); }

  /// Load and attractiveness for a hypothetical request starting at `at` (log time).
  pricing::LoadSnapshot load_at(std::int64_t at, std::int64_t cores, std::int64_t duration) const;
  /// Most recent attractiveness this agent computed, if any.
  std::optional<Money> last_attractiveness() const { return last_attractiveness_; }

  void on_start(Context& ctx) override;
  void on_message(const AclMessage& msg, Context& ctx) override;
  void on_timer(runtime::TimerId id, const std::string& tag, Context& ctx) override;
  void on_undeliverable(const AclMessage& msg, Context& ctx) override;

  void handle_cfp(const AclMessage& msg, Context& ctx);
  void handle_accept(const AclMessage& msg, Context& ctx);
  void handle_confirm(const AclMessage& msg, Context& ctx);
  void handle_cancel(const AclMessage& msg, Context& ctx);
  /// Frees every hold whose deadline has passed.
  std::vector<std::string> expire_holds(Context& ctx);

 private:
  struct LiveOffer {
    protocol::Offer offer;
    rfql::RfqRequest request;
    std::string user_id;
    std::string conversation_id;
    std::int64_t start_log = 0;
    Timestamp expires_at{};
  };

  void refuse(const AclMessage& msg, const std::string& reason, Context& ctx, const std::string& ref = "");
  void notify_bank(PendingDeal& deal, Context& ctx);
  void send_to_bank(AclMessage msg, Context& ctx);
  void bank_reply(const AclMessage& msg, Context& ctx);
  std::int64_t now_log(Context& ctx) const;
  void drop_stale_offers(Timestamp now);

  ResourceAgentConfig config_;
  std::unique_ptr<queuesim::QueuePlugin> queue_;
  std::shared_ptr<const signing::KeyRing> keys_;
  signing::Signer signer_;
  std::shared_ptr<harness::RegistrySink> registry_;

  std::map<std::string, LiveOffer> offers_;
  std::map<std::string, PendingDeal> deals_;
  struct BankSend {
    AclMessage message;
    int attempts = 0;
  };
  /// Unanswered bank messages by conversation id.
  std::map<std::string, BankSend> bank_outbox_;
  std::uint64_t next_offer_ = 1;
  std::optional<Money> last_attractiveness_;
};

}  // namespace ramp::agents
