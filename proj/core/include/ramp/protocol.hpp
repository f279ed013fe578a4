#pragma once

#include "ramp/error.hpp"
#include "ramp/money.hpp"
#include "ramp/rfql.hpp"
#include "ramp/signing.hpp"
#include "ramp/time.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace ramp::protocol {

inline constexpr const char* kOntology = "ramp-rfq-v1";
inline constexpr std::uint16_t kResourcePort = 7701;
inline constexpr std::uint16_t kBankPort = 7702;
inline constexpr std::uint16_t kRegistryPort = 7703;
/// Frames above this size are rejected as hostile.
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

enum class Performative {
  kCallForProposals,
  kPropose,
  kRefuse,
  kRejectProposal,
  kAcceptProposal,
  kAgree,
  kConfirm,
  kCancel,
  kRequest,
};

/// "cfp", "propose", "refuse", "reject-proposal", "accept-proposal",
/// "agree", "confirm", "cancel", "request".
const char* to_wire(Performative p);
/// Throws ProtocolError for anything outside the closed set.
Performative performative_from_wire(const std::string& s);

/// A resource's answer to one unit of an RFQ.
struct Offer {
  std::string offer_id;
  std::string resource_id;
  int unit_index = 0;
  Money price;
  CalendarTime proposed_start;
  /// False for a best offer: a floor-priced proposal for a request priced below the floor.
  bool meets_requirements = true;
  int round = 1;
  /// Stamped by the receiver on arrival.
  std::optional<Timestamp> received_at;

  bool operator==(const Offer&) const = default;
};

struct RfqContent {
  rfql::RfqRequest request;
  int unit_index = 0;
  int round = 1;
  bool operator==(const RfqContent&) const = default;
};
struct OfferContent {
  Offer offer;
  bool operator==(const OfferContent&) const = default;
};
struct AcceptContent {
  std::string offer_id;
  bool operator==(const AcceptContent&) const = default;
};
struct AgreeContent {
  std::string reservation_id;
  /// Set by a resource agent: the tentative slot is released after this instant.
  std::optional<Timestamp> hold_until;
  bool operator==(const AgreeContent&) const = default;
};
struct ConfirmContent {
  signing::SignedDocument signed_document;
  bool operator==(const ConfirmContent&) const = default;
};
struct CancelContent {
  std::string reason;
  std::string reservation_id;
  /// Signed cancellation request (user, then resource when forwarded to the bank).
  std::optional<signing::SignedDocument> signed_document;
  bool operator==(const CancelContent&) const = default;
};
struct BankUpdateContent {
  signing::SignedDocument signed_document;
  bool operator==(const BankUpdateContent&) const = default;
};
/// Balance request (signed_request set) or the bank's statement (statement set).
struct BalanceContent {
  std::optional<signing::SignedDocument> signed_request;
  std::optional<nlohmann::json> statement;
  bool operator==(const BalanceContent&) const = default;
};
/// Why a proposal, acceptance, or request was turned down.
struct ReasonContent {
  std::string reason;
  /// Offer or reservation id the refusal concerns, when there is one.
  std::string ref;
  bool operator==(const ReasonContent&) const = default;
};

using Content = std::variant<RfqContent, OfferContent, AcceptContent, AgreeContent, ConfirmContent,
                             CancelContent, BankUpdateContent, BalanceContent, ReasonContent>;

struct AclMessage {
  Performative performative = Performative::kRequest;
  std::string sender;
  std::string receiver;
  std::string conversation_id;
  std::optional<std::string> in_reply_to;
  std::string message_id;
  std::string ontology = kOntology;
  Timestamp sent_at{};
  Content content;
  /// Transport address the sender accepts replies on, when it is not registered.
  std::optional<std::string> sender_address;

  bool operator==(const AclMessage&) const = default;
};

/// Whether `content` may travel with `p`.
bool content_allowed(Performative p, const Content& content);

nlohmann::json message_to_json(const AclMessage& msg);
/// Throws ProtocolError on unknown performatives, missing fields, or content mismatch.
AclMessage message_from_json(const nlohmann::json& j);

/// 4-byte big-endian length prefix followed by UTF-8 JSON.
/// Throws ProtocolError when content and performative disagree.
std::vector<std::uint8_t> encode_message(const AclMessage& msg);

struct Decoded {
  AclMessage message;
  std::size_t consumed = 0;
};
/// Decodes the first frame in `bytes`. nullopt means more bytes are needed.
/// Throws ProtocolError for empty, oversized, or malformed frames.
std::optional<Decoded> decode_message(std::span<const std::uint8_t> bytes);

/// Generic framing shared by the agent wire protocol and the registry protocol.
std::vector<std::uint8_t> encode_frame(const std::string& body);
std::optional<std::pair<std::string, std::size_t>> decode_frame(std::span<const std::uint8_t> bytes);

/// Accumulates bytes from a stream and yields complete frame bodies.
class FrameBuffer {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete frame body; throws ProtocolError on a bad frame.
  std::optional<std::string> next_frame();
  /// Next complete agent message.
  std::optional<AclMessage> next_message();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::vector<std::uint8_t> buffer_;
};

/// Deterministic id for the dialogue about one unit of one auction.
std::string new_conversation_id(const std::string& auction_id, int unit_index);

/// Terms a user and a resource sign when a unit is bought.
struct DealTerms {
  rfql::RfqRequest unit;
  std::string reservation_id;
  Money price;
  CalendarTime proposed_start;
  std::string user_id;
  std::string resource_id;

  /// Canonical payload bytes (sorted-key JSON).
  std::string to_payload() const;
  static DealTerms from_payload(const std::string& payload);
  bool operator==(const DealTerms&) const = default;
};

/// A user's request to undo a purchase.
struct CancelTerms {
  std::string reservation_id;
  std::string user_id;
  std::string resource_id;

  std::string to_payload() const;
  static CancelTerms from_payload(const std::string& payload);
};

nlohmann::json signed_document_to_json(const signing::SignedDocument& doc);
signing::SignedDocument signed_document_from_json(const nlohmann::json& j);
nlohmann::json offer_to_json(const Offer& offer);
Offer offer_from_json(const nlohmann::json& j);

}  // namespace ramp::protocol
