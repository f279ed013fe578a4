#include "ramp/error.hpp"
#include "ramp/pricing.hpp"

#include <gtest/gtest.h>

#include <random>

namespace ramp::pricing {
namespace {

PricingConfig band(int sp, int mp, std::int64_t s = 3) {
  PricingConfig c;
  c.start_price = Money::from_units(sp);
  c.min_price = Money::from_units(mp);
  c.anticipated_rounds = s;
  return c;
}

LoadSnapshot load(std::int64_t num, std::int64_t den) { return LoadSnapshot(Rational(num, den)); }

TEST(Decrement, Thunder1HalfLoaded) { EXPECT_EQ(decrement(band(70, 40), load(1, 2)), Money::parse("5.00")); }

TEST(Decrement, ZeroBandAndSaturation) {
  EXPECT_EQ(decrement(band(50, 50), load(1, 3)), Money{});
  EXPECT_EQ(decrement(band(80, 30), load(1, 1)), Money{});
}

TEST(Attractiveness, Curie3Idle) {
  EXPECT_EQ(attractiveness(band(80, 30), load(0, 1)), Money::parse("16.67"));
  EXPECT_EQ(decrement_exact(band(80, 30), load(0, 1)), Rational(50, 3));
}

TEST(Attractiveness, StrictlyDecreasingInLoad) {
  const auto c = band(80, 30);
  for (int i = 0; i < 10; ++i) {
    EXPECT_GT(decrement_exact(c, load(i, 10)), decrement_exact(c, load(i + 1, 10)));
  }
}

TEST(MakeOffer, Atlas1QuarterLoad) {
  EXPECT_EQ(make_offer(band(33, 25), load(1, 4), Money::from_units(70)), OfferDecision(Bid{Money::parse("68.00")}));
}

TEST(MakeOffer, BelowFloorIsBestOffer) {
  EXPECT_EQ(make_offer(band(80, 65), load(1, 5), Money::from_units(55)),
            OfferDecision(BestOffer{Money::from_units(65)}));
  auto strict = band(80, 65);
  strict.best_offer_enabled = false;
  EXPECT_EQ(make_offer(strict, load(1, 5), Money::from_units(55)), OfferDecision(Decline{}));
}

TEST(MakeOffer, AtFloorBidsFloor) {
  EXPECT_EQ(make_offer(band(33, 25), load(0, 1), Money::from_units(25)), OfferDecision(Bid{Money::from_units(25)}));
}

TEST(MakeOffer, LiteralFormulaSaturatedClampsAtFloor) {
  auto c = band(33, 25);
  c.formula = DecrementFormula::kLiteral;
  EXPECT_EQ(make_offer(c, load(1, 1), Money::from_units(70)), OfferDecision(Bid{Money::from_units(25)}));
}

TEST(PricingConfig, Validation) {
  EXPECT_THROW(band(20, 25).validate(), ConfigError);
  EXPECT_THROW(band(30, 0).validate(), ConfigError);
  EXPECT_THROW(band(30, 25, 0).validate(), ConfigError);
  EXPECT_NO_THROW(band(25, 25).validate());
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

// Independent oracle in integer cents: bid = clamp(round(req - (sp - mp)(1 - l)/s), mp, req),
// with a single half-up rounding of the exact value.
std::int64_t oracle_bid_cents(std::int64_t sp, std::int64_t mp, std::int64_t s, std::int64_t ln, std::int64_t ld,
                              std::int64_t req) {
  const std::int64_t den = s * ld;
  const std::int64_t exact_num = req * den - (sp - mp) * (ld - ln);  // bid = exact_num / den cents
  const std::int64_t rounded = exact_num >= 0 ? floor_div(2 * exact_num + den, 2 * den)
                                              : -floor_div(2 * -exact_num + den, 2 * den);
  return std::clamp(rounded, mp, req);
}

TEST(MakeOffer, MatchesOracleAndStaysInBand) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 5000; ++i) {
    const std::int64_t mp = std::uniform_int_distribution<std::int64_t>(1, 10000)(rng);
    const std::int64_t sp = mp + std::uniform_int_distribution<std::int64_t>(0, 10000)(rng);
    const std::int64_t s = std::uniform_int_distribution<std::int64_t>(1, 10)(rng);
    const std::int64_t ld = std::uniform_int_distribution<std::int64_t>(1, 1000)(rng);
    const std::int64_t ln = std::uniform_int_distribution<std::int64_t>(0, ld)(rng);
    const std::int64_t req = std::uniform_int_distribution<std::int64_t>(1, 30000)(rng);
    PricingConfig c;
    c.start_price = Money::from_cents(sp);
    c.min_price = Money::from_cents(mp);
    c.anticipated_rounds = s;
    const auto d = make_offer(c, load(ln, ld), Money::from_cents(req));
    if (req < mp) {
      ASSERT_EQ(d, OfferDecision(BestOffer{Money::from_cents(mp)}));
      continue;
    }
    const auto* bid = std::get_if<Bid>(&d);
    ASSERT_NE(bid, nullptr);
    ASSERT_EQ(bid->price.cents(), oracle_bid_cents(sp, mp, s, ln, ld, req));
    ASSERT_GE(bid->price.cents(), mp);
    ASSERT_LE(bid->price.cents(), req);
  }
}

TEST(MakeOffer, RepeatedRoundsNeverIncrease) {
  // A user that re-asks at the best price seen keeps getting lower or equal bids.
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto c = band(std::uniform_int_distribution<int>(26, 90)(rng), 25);
    const auto l = load(std::uniform_int_distribution<int>(0, 100)(rng), 100);
    Money req = Money::from_units(std::uniform_int_distribution<int>(25, 120)(rng));
    for (int r = 0; r < 10; ++r) {
      const auto bid = std::get<Bid>(make_offer(c, l, req)).price;
      ASSERT_LE(bid, req);
      req = bid;
    }
  }
}

}  // namespace
}  // namespace ramp::pricing
