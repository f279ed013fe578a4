#include "ramp/bank.hpp"

#include "ramp/error.hpp"

#include <fmt/format.h>

#include <filesystem>

namespace ramp::bank {

using protocol::Performative;

namespace {

const std::string kGenesis(64, '0');

std::string digest_of(const rfql::RfqRequest& unit) {
  return signing::sha256_hex(rfql::request_to_json(unit).dump());
}

}  // namespace

const char* to_string(EntryKind k) {
  switch (k) {
    case EntryKind::kDeposit: return "deposit";
    case EntryKind::kSettlement: return "settlement";
    case EntryKind::kRecredit: return "re-credit";
  }
  return "?";
}

EntryKind entry_kind_from_string(const std::string& s) {
  if (s == "deposit") return EntryKind::kDeposit;
  if (s == "settlement") return EntryKind::kSettlement;
  if (s == "re-credit") return EntryKind::kRecredit;
  throw Error("unknown ledger entry kind '" + s + "'");
}

nlohmann::json entry_to_json(const LedgerEntry& e) {
  nlohmann::json j{{"tx_id", e.tx_id},
                   {"kind", to_string(e.kind)},
                   {"debit_account", e.debit_account},
                   {"credit_account", e.credit_account},
                   {"amount", e.amount.to_string()},
                   {"reservation_id", e.reservation_id},
                   {"rfq_digest", e.rfq_digest},
                   {"timestamp", to_epoch_ms(e.timestamp)},
                   {"prev_hash", e.prev_hash}};
  if (e.document) j["document"] = protocol::signed_document_to_json(*e.document);
  if (!e.hash.empty()) j["hash"] = e.hash;
  return j;
}

LedgerEntry entry_from_json(const nlohmann::json& j) {
  LedgerEntry e;
  e.tx_id = j.at("tx_id").get<std::string>();
  e.kind = entry_kind_from_string(j.at("kind").get<std::string>());
  e.debit_account = j.at("debit_account").get<std::string>();
  e.credit_account = j.at("credit_account").get<std::string>();
  e.amount = Money::parse(j.at("amount").get<std::string>());
  e.reservation_id = j.value("reservation_id", "");
  e.rfq_digest = j.value("rfq_digest", "");
  e.timestamp = from_epoch_ms(j.at("timestamp").get<std::int64_t>());
  if (j.contains("document")) e.document = protocol::signed_document_from_json(j.at("document"));
  e.prev_hash = j.at("prev_hash").get<std::string>();
  e.hash = j.value("hash", "");
  return e;
}

std::string entry_hash(const LedgerEntry& e) {
  auto copy = e;
  copy.hash.clear();
  return signing::sha256_hex(e.prev_hash + entry_to_json(copy).dump());
}

Money compute_amount(const rfql::RfqRequest& unit, Money agreed_price) {
  const Rational cores(unit.requested_cores());
  const Rational hours(unit.wall_time.value_or(0), 3600);
  return Money::from_rational(agreed_price.to_rational() * cores * hours);
}

std::vector<LedgerEntry> load_ledger(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ledger '" + path + "'");
  std::vector<LedgerEntry> out;
  std::string line;
  std::string prev = kGenesis;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LedgerEntry e;
    try {
      e = entry_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& ex) {
      throw ParseError(fmt::format("ledger line {}: {}", line_no, ex.what()), line_no);
    }
    if (e.prev_hash != prev || entry_hash(e) != e.hash) {
      throw Error(fmt::format("ledger hash chain broken at line {}", line_no));
    }
    prev = e.hash;
    out.push_back(std::move(e));
  }
  return out;
}

std::map<std::string, Money> replay(const std::vector<LedgerEntry>& entries) {
  std::map<std::string, Money> balances;
  for (const auto& e : entries) {
    balances[e.debit_account] -= e.amount;
    balances[e.credit_account] += e.amount;
  }
  return balances;
}

std::string balance_request_payload(const std::string& principal, std::uint64_t nonce) {
  return nlohmann::json{{"kind", "balance"}, {"principal", principal}, {"nonce", nonce}}.dump();
}

Bank::Bank(std::shared_ptr<signing::KeyRing> keys, std::optional<std::string> ledger_path)
    : keys_(std::move(keys)), path_(std::move(ledger_path)) {
  if (!keys_) throw ConfigError("bank needs a key ring");
  if (!path_) return;
  if (std::filesystem::exists(*path_)) {
    for (auto& e : load_ledger(*path_)) {
      apply(e);
      entries_.push_back(std::move(e));
    }
  }
  out_.open(*path_, std::ios::app);
  if (!out_) throw ConfigError("cannot open ledger '" + *path_ + "' for append");
}

void Bank::apply(const LedgerEntry& e) {
  balances_[e.debit_account] -= e.amount;
  balances_[e.credit_account] += e.amount;
  if (e.kind == EntryKind::kSettlement) settlements_[e.reservation_id] = entries_.size();
  if (e.kind == EntryKind::kRecredit) reversed_.insert(e.reservation_id);
}

LedgerEntry Bank::append(LedgerEntry e) {
  e.tx_id = fmt::format("tx-{:06}", entries_.size() + 1);
  e.prev_hash = entries_.empty() ? kGenesis : entries_.back().hash;
  e.hash = entry_hash(e);
  if (out_.is_open()) {
    out_ << entry_to_json(e).dump() << '\n';
    out_.flush();
  }
  apply(e);
  entries_.push_back(e);
  return e;
}

LedgerEntry Bank::deposit(const std::string& principal, Money amount, Timestamp now) {
  if (amount <= Money{}) throw Error("deposit amount must be positive");
  std::lock_guard lock(mu_);
  LedgerEntry e;
  e.kind = EntryKind::kDeposit;
  e.debit_account = kTreasury;
  e.credit_account = principal;
  e.amount = amount;
  e.timestamp = now;
  return append(std::move(e));
}

Outcome Bank::transaction_update(const signing::SignedDocument& doc, Timestamp now) {
  protocol::DealTerms terms;
  try {
    terms = protocol::DealTerms::from_payload(doc.payload);
  } catch (const std::exception&) {
    return {false, "malformed", std::nullopt};
  }
  const std::vector<std::string> signers{terms.user_id, terms.resource_id};
  std::lock_guard lock(mu_);
  if (!keys_->contains(terms.user_id) || !keys_->contains(terms.resource_id)) {
    return {false, "unknown-principal", std::nullopt};
  }
  if (!keys_->verify_all(doc, signers)) return {false, "bad-signature", std::nullopt};
  if (auto it = settlements_.find(terms.reservation_id); it != settlements_.end()) {
    return {true, "duplicate", entries_[it->second]};
  }
  const Money amount = compute_amount(terms.unit, terms.price);
  if (amount <= Money{}) return {false, "zero-amount", std::nullopt};
  LedgerEntry e;
  e.kind = EntryKind::kSettlement;
  e.debit_account = terms.user_id;
  e.credit_account = terms.resource_id;
  e.amount = amount;
  e.reservation_id = terms.reservation_id;
  e.rfq_digest = digest_of(terms.unit);
  e.timestamp = now;
  e.document = doc;
  return {true, "", append(std::move(e))};
}

Outcome Bank::cancellation(const signing::SignedDocument& doc, Timestamp now) {
  protocol::CancelTerms terms;
  try {
    terms = protocol::CancelTerms::from_payload(doc.payload);
  } catch (const std::exception&) {
    return {false, "malformed", std::nullopt};
  }
  const std::vector<std::string> signers{terms.user_id, terms.resource_id};
  std::lock_guard lock(mu_);
  if (!keys_->contains(terms.user_id) || !keys_->contains(terms.resource_id)) {
    return {false, "unknown-principal", std::nullopt};
  }
  if (!keys_->verify_all(doc, signers)) return {false, "bad-signature", std::nullopt};
  auto it = settlements_.find(terms.reservation_id);
  if (it == settlements_.end()) return {false, "unknown-reservation", std::nullopt};
  if (reversed_.count(terms.reservation_id)) return {false, "already-reversed", std::nullopt};
  const LedgerEntry& settled = entries_[it->second];
  if (settled.debit_account != terms.user_id || settled.credit_account != terms.resource_id) {
    return {false, "not-party", std::nullopt};
  }
  LedgerEntry e;
  e.kind = EntryKind::kRecredit;
  e.debit_account = settled.credit_account;
  e.credit_account = settled.debit_account;
  e.amount = settled.amount;
  e.reservation_id = terms.reservation_id;
  e.rfq_digest = settled.rfq_digest;
  e.timestamp = now;
  e.document = doc;
  return {true, "", append(std::move(e))};
}

nlohmann::json Bank::statement_locked(const std::string& principal, std::size_t last_k) const {
  auto recent = nlohmann::json::array();
  std::vector<const LedgerEntry*> touching;
  for (const auto& e : entries_) {
    if (e.debit_account == principal || e.credit_account == principal) touching.push_back(&e);
  }
  const std::size_t from = touching.size() > last_k ? touching.size() - last_k : 0;
  for (std::size_t i = from; i < touching.size(); ++i) {
    auto j = entry_to_json(*touching[i]);
    j.erase("document");
    recent.push_back(std::move(j));
  }
  auto it = balances_.find(principal);
  const Money bal = it == balances_.end() ? Money{} : it->second;
  return {{"principal", principal}, {"balance", bal.to_string()}, {"entries", recent}};
}

std::optional<nlohmann::json> Bank::balance_statement(const signing::SignedDocument& request,
                                                      std::size_t last_k) const {
  std::string principal;
  try {
    const auto j = nlohmann::json::parse(request.payload);
    if (j.value("kind", "") != "balance") return std::nullopt;
    principal = j.at("principal").get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
  std::lock_guard lock(mu_);
  if (!keys_->contains(principal) || !keys_->verify_all(request, std::span(&principal, 1))) return std::nullopt;
  return statement_locked(principal, last_k);
}

nlohmann::json Bank::statement(const std::string& principal, std::size_t last_k) const {
  std::lock_guard lock(mu_);
  return statement_locked(principal, last_k);
}

Money Bank::balance(const std::string& principal) const {
  std::lock_guard lock(mu_);
  auto it = balances_.find(principal);
  return it == balances_.end() ? Money{} : it->second;
}

std::map<std::string, Money> Bank::balances() const {
  std::lock_guard lock(mu_);
  return balances_;
}

std::vector<LedgerEntry> Bank::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::vector<LedgerEntry> Bank::entries_for(const std::string& principal) const {
  std::lock_guard lock(mu_);
  std::vector<LedgerEntry> out;
  for (const auto& e : entries_) {
    if (e.debit_account == principal || e.credit_account == principal) out.push_back(e);
  }
  return out;
}

bool Bank::is_settled(const std::string& reservation_id) const {
  std::lock_guard lock(mu_);
  return settlements_.count(reservation_id) != 0;
}

bool Bank::is_reversed(const std::string& reservation_id) const {
  std::lock_guard lock(mu_);
  return reversed_.count(reservation_id) != 0;
}

void BankAgent::on_message(const protocol::AclMessage& msg, runtime::Context& ctx) {
  auto refuse = [&](const std::string& reason) {
    ctx.send(runtime::reply_to(msg, Performative::kRefuse, protocol::ReasonContent{reason, ""}));
  };
  auto record = [&](const char* what, const Outcome& o) {
    nlohmann::json r{{"kind", "bank"}, {"operation", what}, {"agreed", o.agreed}, {"reason", o.reason}};
    if (o.entry) r["entry"] = entry_to_json(*o.entry);
    ctx.record(std::move(r));
  };

  if (const auto* update = std::get_if<protocol::BankUpdateContent>(&msg.content)) {
    auto outcome = bank_->transaction_update(update->signed_document, ctx.now());
    // Only the countersigning resource may submit its deal.
    if (outcome.agreed && update->signed_document.signatures.back().signer_id != msg.sender) {
      outcome = {false, "not-party", std::nullopt};
    }
    record("settlement", outcome);
    if (!outcome.agreed) return refuse(outcome.reason);
    ctx.send(runtime::reply_to(msg, Performative::kAgree,
                               protocol::AgreeContent{outcome.entry->reservation_id, std::nullopt}));
    return;
  }
  if (const auto* cancel = std::get_if<protocol::CancelContent>(&msg.content)) {
    if (!cancel->signed_document) return refuse("unsigned");
    auto outcome = bank_->cancellation(*cancel->signed_document, ctx.now());
    record("re-credit", outcome);
    if (!outcome.agreed) return refuse(outcome.reason);
    const auto& e = *outcome.entry;
    ctx.send(runtime::reply_to(msg, Performative::kAgree, protocol::AgreeContent{e.reservation_id, std::nullopt}));
    // Tell the user too; the resource already knows.
    ctx.send(runtime::make_message(Performative::kAgree, e.credit_account, msg.conversation_id,
                                   protocol::AgreeContent{e.reservation_id, std::nullopt}));
    return;
  }
  if (const auto* balance = std::get_if<protocol::BalanceContent>(&msg.content)) {
    std::optional<nlohmann::json> statement;
    if (balance->signed_request) statement = bank_->balance_statement(*balance->signed_request);
    if (!statement) return refuse("bad-signature");
    ctx.send(runtime::reply_to(msg, Performative::kAgree, protocol::BalanceContent{std::nullopt, *statement}));
    return;
  }
  refuse("unexpected");
}

}  // namespace ramp::bank
