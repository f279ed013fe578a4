#include "ramp/bank.hpp"
#include "ramp/error.hpp"

#include "ramp_test/support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>

namespace ramp::bank {
namespace {

using testing::make_request;
using testing::t0;

TEST(ComputeAmount, Examples) {
  EXPECT_EQ(compute_amount(make_request(Money::from_units(70), 16, 3600), Money::from_units(70)),
            Money::from_units(1120));
  EXPECT_EQ(compute_amount(make_request(Money::from_units(70), 1, 3600), Money::parse("48.37")),
            Money::parse("48.37"));
  EXPECT_EQ(compute_amount(make_request(Money::from_units(25), 256, 1800), Money::from_units(25)),
            Money::from_units(3200));
  EXPECT_EQ(compute_amount(make_request(Money::from_units(25), 16, 7200), Money::from_units(25)),
            Money::from_units(800));
  // 0.01 x 1 core x 1 s rounds to zero cents; 0.01 x 1 x 1800 s is half a cent and rounds up
  EXPECT_EQ(compute_amount(make_request(Money::from_units(1), 1, 1), Money::from_cents(1)), Money{});
  EXPECT_EQ(compute_amount(make_request(Money::from_units(1), 1, 1800), Money::from_cents(1)), Money::from_cents(1));
}

class BankTest : public ::testing::Test {
 protected:
  BankTest() : ring(std::make_shared<signing::KeyRing>()) {
    ring->add(user);
    ring->add(resource);
    ring->add(other);
    bank = std::make_unique<Bank>(ring);
    bank->deposit("user1", Money::from_units(10000), t0());
  }

  protocol::DealTerms deal(const std::string& rid = "atlas1-r1") const {
    return {make_request(Money::from_units(25), 16, 7200), rid, Money::from_units(25),
            std::chrono::time_point_cast<Seconds>(t0()), "user1", "atlas1"};
  }

  signing::SignedDocument countersigned(const std::string& payload) const {
    signing::SignedDocument d{payload, {}};
    signing::Signer(user).sign(d);
    signing::Signer(resource).sign(d);
    return d;
  }

  signing::KeyPair user = signing::derive_key("user1", 1);
  signing::KeyPair resource = signing::derive_key("atlas1", 2);
  signing::KeyPair other = signing::derive_key("mallory", 3);
  std::shared_ptr<signing::KeyRing> ring;
  std::unique_ptr<Bank> bank;
};

TEST_F(BankTest, SettlementAndStatement) {
  const auto out = bank->transaction_update(countersigned(deal().to_payload()), t0());
  ASSERT_TRUE(out.agreed) << out.reason;
  EXPECT_EQ(out.entry->amount, Money::from_units(800));
  EXPECT_EQ(bank->balance("user1"), Money::from_units(9200));
  EXPECT_EQ(bank->balance("atlas1"), Money::from_units(800));
  const auto st = bank->statement("user1");
  EXPECT_EQ(st.at("balance"), "9200.00");
  EXPECT_EQ(st.at("entries").size(), 2u);
  EXPECT_EQ(bank->statement("atlas1").at("balance"), "800.00");
}

TEST_F(BankTest, SettlementIsIdempotent) {
  const auto doc = countersigned(deal().to_payload());
  const auto first = bank->transaction_update(doc, t0());
  const auto again = bank->transaction_update(doc, t0() + Seconds(5));
  EXPECT_TRUE(again.agreed);
  EXPECT_EQ(again.reason, "duplicate");
  EXPECT_EQ(again.entry->tx_id, first.entry->tx_id);
  EXPECT_EQ(bank->entries().size(), 2u);
  EXPECT_EQ(bank->balance("user1"), Money::from_units(9200));
}

TEST_F(BankTest, RefusesBadSignatures) {
  signing::SignedDocument one{deal().to_payload(), {}};
  signing::Signer(user).sign(one);
  EXPECT_EQ(bank->transaction_update(one, t0()).reason, "bad-signature");

  signing::SignedDocument forged{deal().to_payload(), {}};
  signing::Signer(user).sign(forged);
  signing::Signer(other).sign(forged);
  forged.signatures[1].signer_id = "atlas1";
  EXPECT_EQ(bank->transaction_update(forged, t0()).reason, "bad-signature");

  auto tampered = countersigned(deal().to_payload());
  tampered.payload.back() = ' ';
  EXPECT_FALSE(bank->transaction_update(tampered, t0()).agreed);

  EXPECT_EQ(bank->transaction_update({"not json", {}}, t0()).reason, "malformed");
  EXPECT_EQ(bank->entries().size(), 1u);
}

TEST_F(BankTest, CancellationRecreditsOnce) {
  ASSERT_TRUE(bank->transaction_update(countersigned(deal().to_payload()), t0()).agreed);
  const protocol::CancelTerms cancel{"atlas1-r1", "user1", "atlas1"};
  const auto out = bank->cancellation(countersigned(cancel.to_payload()), t0() + Seconds(10));
  ASSERT_TRUE(out.agreed) << out.reason;
  EXPECT_EQ(out.entry->kind, EntryKind::kRecredit);
  EXPECT_EQ(bank->balance("user1"), Money::from_units(10000));
  EXPECT_EQ(bank->balance("atlas1"), Money{});
  EXPECT_TRUE(bank->is_reversed("atlas1-r1"));
  EXPECT_EQ(bank->cancellation(countersigned(cancel.to_payload()), t0()).reason, "already-reversed");
  const protocol::CancelTerms unknown{"nope", "user1", "atlas1"};
  EXPECT_EQ(bank->cancellation(countersigned(unknown.to_payload()), t0()).reason, "unknown-reservation");
}

TEST_F(BankTest, BalanceRequestMustBeSignedByPrincipal) {
  signing::SignedDocument req{balance_request_payload("user1", 1), {}};
  signing::Signer(user).sign(req);
  const auto st = bank->balance_statement(req);
  ASSERT_TRUE(st);
  EXPECT_EQ(st->at("balance"), "10000.00");
  signing::SignedDocument spy{balance_request_payload("user1", 2), {}};
  signing::Signer(other).sign(spy);
  EXPECT_FALSE(bank->balance_statement(spy));
}

TEST_F(BankTest, RandomActivityStaysZeroSum) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    const auto rid = "r" + std::to_string(i);
    auto d = deal(rid);
    d.price = Money::from_cents(std::uniform_int_distribution<int>(1, 9000)(rng));
    bank->transaction_update(countersigned(d.to_payload()), t0());
    if (rng() % 3 == 0) {
      bank->cancellation(countersigned(protocol::CancelTerms{rid, "user1", "atlas1"}.to_payload()), t0());
    }
  }
  Money total;
  for (const auto& [acct, bal] : bank->balances()) total += bal;
  EXPECT_EQ(total, Money{});
  EXPECT_EQ(replay(bank->entries()), bank->balances());
}

TEST(BankLedger, PersistsAndDetectsTampering) {
  testing::TempDir dir;
  const auto path = dir.file("ledger.jsonl");
  auto ring = std::make_shared<signing::KeyRing>();
  {
    Bank bank(ring, path);
    bank.deposit("a", Money::from_units(10), t0());
    bank.deposit("b", Money::from_units(5), t0());
  }
  const auto entries = load_ledger(path);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[1].prev_hash, entries[0].hash);
  {
    Bank reopened(ring, path);
    EXPECT_EQ(reopened.balance("a"), Money::from_units(10));
    reopened.deposit("a", Money::from_units(1), t0());
  }
  EXPECT_EQ(replay(load_ledger(path)).at("a"), Money::from_units(11));

  std::string text = testing::read_file(path);
  text.replace(text.find("10.00"), 5, "99.00");
  std::ofstream(path, std::ios::trunc) << text;
  EXPECT_THROW(load_ledger(path), Error);
}

}  // namespace
}  // namespace ramp::bank
