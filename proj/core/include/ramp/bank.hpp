#pragma once

#include "ramp/money.hpp"
#include "ramp/protocol.hpp"
#include "ramp/runtime.hpp"
#include "ramp/signing.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ramp::bank {

/// Source of administrator deposits; keeps the ledger zero-sum.
inline constexpr const char* kTreasury = "@treasury";

enum class EntryKind { kDeposit, kSettlement, kRecredit };
const char* to_string(EntryKind k);
EntryKind entry_kind_from_string(const std::string& s);

struct LedgerEntry {
  std::string tx_id;
  EntryKind kind = EntryKind::kSettlement;
  std::string debit_account;
  std::string credit_account;
  Money amount;
  std::string reservation_id;
  std::string rfq_digest;
  Timestamp timestamp{};
  /// The signed document that authorised the entry (absent for deposits).
  std::optional<signing::SignedDocument> document;
  std::string prev_hash;
  std::string hash;
};

nlohmann::json entry_to_json(const LedgerEntry& e);
LedgerEntry entry_from_json(const nlohmann::json& j);
/// sha256 over prev_hash and the entry's canonical JSON without its own hash.
std::string entry_hash(const LedgerEntry& e);

/// price x cores x wall_time / 3600, rounded half-up to cents.
Money compute_amount(const rfql::RfqRequest& unit, Money agreed_price);

struct Outcome {
  bool agreed = false;
  std::string reason;
  std::optional<LedgerEntry> entry;
};

/// Accounts and the append-only ledger. Thread-safe; all mutations are serialized.
class Bank {
 public:
  /// Without a path the ledger is in memory only. With one, existing entries
  /// are replayed (chain verified) and new ones appended.
  explicit Bank(std::shared_ptr<signing::KeyRing> keys, std::optional<std::string> ledger_path = std::nullopt);

  const signing::KeyRing& keys() const { return *keys_; }

  LedgerEntry deposit(const std::string& principal, Money amount, Timestamp now);
  Outcome transaction_update(const signing::SignedDocument& doc, Timestamp now);
  Outcome cancellation(const signing::SignedDocument& doc, Timestamp now);
  /// Statement for the signer of a {"kind":"balance","principal":p} request.
  std::optional<nlohmann::json> balance_statement(const signing::SignedDocument& request, std::size_t last_k = 10) const;

  Money balance(const std::string& principal) const;
  std::map<std::string, Money> balances() const;
  std::vector<LedgerEntry> entries() const;
  std::vector<LedgerEntry> entries_for(const std::string& principal) const;
  bool is_settled(const std::string& reservation_id) const;
  bool is_reversed(const std::string& reservation_id) const;
  /// Unaided statement (used by operators and the ops API).
  nlohmann::json statement(const std::string& principal, std::size_t last_k = 10) const;

 private:
  LedgerEntry append(LedgerEntry e);
  void apply(const LedgerEntry& e);
  nlohmann::json statement_locked(const std::string& principal, std::size_t last_k) const;

  std::shared_ptr<signing::KeyRing> keys_;
  mutable std::mutex mu_;
  std::vector<LedgerEntry> entries_;
  std::map<std::string, Money> balances_;
  /// reservation id -> index of its settlement entry
  std::map<std::string, std::size_t> settlements_;
  std::set<std::string> reversed_;
  std::optional<std::string> path_;
  std::ofstream out_;
};

/// Reads a ledger file, verifying the hash chain; throws Error on corruption.
std::vector<LedgerEntry> load_ledger(const std::string& path);
/// Balances obtained by replaying entries from zero.
std::map<std::string, Money> replay(const std::vector<LedgerEntry>& entries);

/// Payload of a signed balance request.
std::string balance_request_payload(const std::string& principal, std::uint64_t nonce);

class BankAgent final : public runtime::Agent {
 public:
  BankAgent(std::string id, std::shared_ptr<Bank> bank) : Agent(std::move(id)), bank_(std::move(bank)) {}
  Bank& bank() { return *bank_; }
  void on_message(const protocol::AclMessage& msg, runtime::Context& ctx) override;

 private:
  std::shared_ptr<Bank> bank_;
};

}  // namespace ramp::bank
