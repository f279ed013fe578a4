#include "ramp/protocol.hpp"

#include <fmt/format.h>

namespace ramp::protocol {

using nlohmann::json;

namespace {

constexpr std::pair<Performative, const char*> kWireNames[] = {
    {Performative::kCallForProposals, "cfp"},
    {Performative::kPropose, "propose"},
    {Performative::kRefuse, "refuse"},
    {Performative::kRejectProposal, "reject-proposal"},
    {Performative::kAcceptProposal, "accept-proposal"},
    {Performative::kAgree, "agree"},
    {Performative::kConfirm, "confirm"},
    {Performative::kCancel, "cancel"},
    {Performative::kRequest, "request"},
};

json opt_ts(const std::optional<Timestamp>& t) { return t ? json(to_epoch_ms(*t)) : json(nullptr); }

std::optional<Timestamp> ts_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return from_epoch_ms(j.at(key).get<std::int64_t>());
}

json content_to_json(const Content& c) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RfqContent>) {
          return {{"type", "rfq"}, {"request", rfql::request_to_json(v.request)},
                  {"unit_index", v.unit_index}, {"round", v.round}};
        } else if constexpr (std::is_same_v<T, OfferContent>) {
          return {{"type", "offer"}, {"offer", offer_to_json(v.offer)}};
        } else if constexpr (std::is_same_v<T, AcceptContent>) {
          return {{"type", "accept"}, {"offer_id", v.offer_id}};
        } else if constexpr (std::is_same_v<T, AgreeContent>) {
          return {{"type", "agree"}, {"reservation_id", v.reservation_id}, {"hold_until", opt_ts(v.hold_until)}};
        } else if constexpr (std::is_same_v<T, ConfirmContent>) {
          return {{"type", "confirm"}, {"signed_document", signed_document_to_json(v.signed_document)}};
        } else if constexpr (std::is_same_v<T, CancelContent>) {
          return {{"type", "cancel"},
                  {"reason", v.reason},
                  {"reservation_id", v.reservation_id},
                  {"signed_document", v.signed_document ? signed_document_to_json(*v.signed_document) : json(nullptr)}};
        } else if constexpr (std::is_same_v<T, BankUpdateContent>) {
          return {{"type", "bank-update"}, {"signed_document", signed_document_to_json(v.signed_document)}};
        } else if constexpr (std::is_same_v<T, BalanceContent>) {
          return {{"type", "balance"},
                  {"signed_request", v.signed_request ? signed_document_to_json(*v.signed_request) : json(nullptr)},
                  {"statement", v.statement ? *v.statement : json(nullptr)}};
        } else {
          return {{"type", "reason"}, {"reason", v.reason}, {"ref", v.ref}};
        }
      },
      c);
}

Content content_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "rfq") {
    return RfqContent{rfql::request_from_json(j.at("request")), j.at("unit_index").get<int>(),
                      j.at("round").get<int>()};
  }
  if (type == "offer") return OfferContent{offer_from_json(j.at("offer"))};
  if (type == "accept") return AcceptContent{j.at("offer_id").get<std::string>()};
  if (type == "agree") return AgreeContent{j.at("reservation_id").get<std::string>(), ts_from(j, "hold_until")};
  if (type == "confirm") return ConfirmContent{signed_document_from_json(j.at("signed_document"))};
  if (type == "cancel") {
    CancelContent c{j.at("reason").get<std::string>(), j.at("reservation_id").get<std::string>(), std::nullopt};
    if (j.contains("signed_document") && !j.at("signed_document").is_null()) {
      c.signed_document = signed_document_from_json(j.at("signed_document"));
    }
    return c;
  }
  if (type == "bank-update") return BankUpdateContent{signed_document_from_json(j.at("signed_document"))};
  if (type == "balance") {
    BalanceContent b;
    if (j.contains("signed_request") && !j.at("signed_request").is_null()) {
      b.signed_request = signed_document_from_json(j.at("signed_request"));
    }
    if (j.contains("statement") && !j.at("statement").is_null()) b.statement = j.at("statement");
    return b;
  }
  if (type == "reason") return ReasonContent{j.at("reason").get<std::string>(), j.value("ref", std::string())};
  throw ProtocolError("unknown content type '" + type + "'");
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

const char* to_wire(Performative p) {
  for (const auto& [perf, name] : kWireNames) {
    if (perf == p) return name;
  }
  return "?";
}

Performative performative_from_wire(const std::string& s) {
  for (const auto& [perf, name] : kWireNames) {
    if (s == name) return perf;
  }
  throw ProtocolError("unknown performative '" + s + "'");
}

bool content_allowed(Performative p, const Content& c) {
  switch (p) {
    case Performative::kCallForProposals: return std::holds_alternative<RfqContent>(c);
    case Performative::kPropose: return std::holds_alternative<OfferContent>(c);
    case Performative::kRefuse:
    case Performative::kRejectProposal: return std::holds_alternative<ReasonContent>(c);
    case Performative::kAcceptProposal: return std::holds_alternative<AcceptContent>(c);
    case Performative::kAgree:
      return std::holds_alternative<AgreeContent>(c) || std::holds_alternative<BalanceContent>(c);
    case Performative::kConfirm: return std::holds_alternative<ConfirmContent>(c);
    case Performative::kCancel: return std::holds_alternative<CancelContent>(c);
    case Performative::kRequest:
      return std::holds_alternative<BankUpdateContent>(c) || std::holds_alternative<BalanceContent>(c);
  }
  return false;
}

json offer_to_json(const Offer& o) {
  return {{"offer_id", o.offer_id},
          {"resource_id", o.resource_id},
          {"unit_index", o.unit_index},
          {"price", o.price.to_double()},
          {"proposed_start", format_iso_datetime(o.proposed_start)},
          {"meets_requirements", o.meets_requirements},
          {"round", o.round},
          {"received_at", opt_ts(o.received_at)}};
}

Offer offer_from_json(const json& j) {
  Offer o;
  o.offer_id = j.at("offer_id").get<std::string>();
  o.resource_id = j.at("resource_id").get<std::string>();
  o.unit_index = j.at("unit_index").get<int>();
  o.price = Money::from_double(j.at("price").get<double>());
  o.proposed_start = parse_iso_datetime(j.at("proposed_start").get<std::string>());
  o.meets_requirements = j.at("meets_requirements").get<bool>();
  o.round = j.at("round").get<int>();
  o.received_at = ts_from(j, "received_at");
  return o;
}

json signed_document_to_json(const signing::SignedDocument& doc) {
  json sigs = json::array();
  for (const auto& s : doc.signatures) sigs.push_back({{"signer_id", s.signer_id}, {"signature", s.value_hex}});
  return {{"payload", doc.payload}, {"signatures", sigs}};
}

signing::SignedDocument signed_document_from_json(const json& j) {
  signing::SignedDocument doc;
  doc.payload = j.at("payload").get<std::string>();
  for (const auto& s : j.at("signatures")) {
    doc.signatures.push_back({s.at("signer_id").get<std::string>(), s.at("signature").get<std::string>()});
  }
  return doc;
}

json message_to_json(const AclMessage& m) {
  json j{{"performative", to_wire(m.performative)},
          {"sender", m.sender},
          {"receiver", m.receiver},
          {"conversation_id", m.conversation_id},
          {"in_reply_to", m.in_reply_to ? json(*m.in_reply_to) : json(nullptr)},
          {"message_id", m.message_id},
          {"ontology", m.ontology},
          {"sent_at", to_epoch_ms(m.sent_at)},
          {"content", content_to_json(m.content)}};
  if (m.sender_address) j["sender_address"] = *m.sender_address;
  return j;
}

AclMessage message_from_json(const json& j) {
  try {
    AclMessage m;
    m.performative = performative_from_wire(j.at("performative").get<std::string>());
    m.sender = j.at("sender").get<std::string>();
    m.receiver = j.at("receiver").get<std::string>();
    m.conversation_id = j.at("conversation_id").get<std::string>();
    if (!j.at("in_reply_to").is_null()) m.in_reply_to = j.at("in_reply_to").get<std::string>();
    if (j.contains("sender_address")) m.sender_address = j.at("sender_address").get<std::string>();
    m.message_id = j.at("message_id").get<std::string>();
    m.ontology = j.at("ontology").get<std::string>();
    if (m.ontology != kOntology) throw ProtocolError("unsupported ontology '" + m.ontology + "'");
    m.sent_at = from_epoch_ms(j.at("sent_at").get<std::int64_t>());
    m.content = content_from_json(j.at("content"));
    if (!content_allowed(m.performative, m.content)) {
      throw ProtocolError(fmt::format("content not allowed with performative '{}'", to_wire(m.performative)));
    }
    return m;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed message content: ") + e.what());
  }
}

std::vector<std::uint8_t> encode_frame(const std::string& body) {
  if (body.size() > kMaxFrameBytes) throw ProtocolError("frame too large");
  std::vector<std::uint8_t> out;
  out.reserve(4 + body.size());
  put_u32_be(out, static_cast<std::uint32_t>(body.size()));
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

std::optional<std::pair<std::string, std::size_t>> decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) return std::nullopt;
  const std::uint32_t len = std::uint32_t{bytes[0]} << 24 | std::uint32_t{bytes[1]} << 16 |
                            std::uint32_t{bytes[2]} << 8 | std::uint32_t{bytes[3]};
  if (len == 0) throw ProtocolError("empty frame");
  if (len > kMaxFrameBytes) throw ProtocolError("frame exceeds maximum size");
  if (bytes.size() < 4 + std::size_t{len}) return std::nullopt;
  return std::make_pair(std::string(reinterpret_cast<const char*>(bytes.data() + 4), len), 4 + std::size_t{len});
}

std::vector<std::uint8_t> encode_message(const AclMessage& msg) {
  if (!content_allowed(msg.performative, msg.content)) {
    throw ProtocolError(fmt::format("content not allowed with performative '{}'", to_wire(msg.performative)));
  }
  return encode_frame(message_to_json(msg).dump());
}

std::optional<Decoded> decode_message(std::span<const std::uint8_t> bytes) {
  auto frame = decode_frame(bytes);
  if (!frame) return std::nullopt;
  json j;
  try {
    j = json::parse(frame->first);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed JSON body: ") + e.what());
  }
  return Decoded{message_from_json(j), frame->second};
}

void FrameBuffer::feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

std::optional<std::string> FrameBuffer::next_frame() {
  auto frame = decode_frame(buffer_);
  if (!frame) return std::nullopt;
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(frame->second));
  return std::move(frame->first);
}

std::optional<AclMessage> FrameBuffer::next_message() {
  auto decoded = decode_message(buffer_);
  if (!decoded) return std::nullopt;
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
  return std::move(decoded->message);
}

std::string new_conversation_id(const std::string& auction_id, int unit_index) {
  // The unit suffix contains no '#', so splitting at the last '#' recovers both parts.
  return auction_id + "#" + std::to_string(unit_index);
}

std::string DealTerms::to_payload() const {
  json j{{"kind", "deal"},
         {"unit", rfql::request_to_json(unit)},
         {"reservation_id", reservation_id},
         {"price", price.to_string()},
         {"proposed_start", format_iso_datetime(proposed_start)},
         {"user_id", user_id},
         {"resource_id", resource_id}};
  return j.dump();
}

DealTerms DealTerms::from_payload(const std::string& payload) {
  try {
    const auto j = json::parse(payload);
    if (j.at("kind").get<std::string>() != "deal") throw ParseError("not a deal payload");
    DealTerms d;
    d.unit = rfql::request_from_json(j.at("unit"));
    d.reservation_id = j.at("reservation_id").get<std::string>();
    d.price = Money::parse(j.at("price").get<std::string>());
    d.proposed_start = parse_iso_datetime(j.at("proposed_start").get<std::string>());
    d.user_id = j.at("user_id").get<std::string>();
    d.resource_id = j.at("resource_id").get<std::string>();
    return d;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed deal payload: ") + e.what());
  }
}

std::string CancelTerms::to_payload() const {
  return json{{"kind", "cancel"}, {"reservation_id", reservation_id}, {"user_id", user_id}, {"resource_id", resource_id}}
      .dump();
}

CancelTerms CancelTerms::from_payload(const std::string& payload) {
  try {
    const auto j = json::parse(payload);
    if (j.at("kind").get<std::string>() != "cancel") throw ParseError("not a cancellation payload");
    return CancelTerms{j.at("reservation_id").get<std::string>(), j.at("user_id").get<std::string>(),
                       j.at("resource_id").get<std::string>()};
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed cancellation payload: ") + e.what());
  }
}

}  // namespace ramp::protocol
