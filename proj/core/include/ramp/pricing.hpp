#pragma once

#include "ramp/money.hpp"

#include <cstdint>
#include <variant>

namespace ramp::pricing {

enum class DecrementFormula {
  /// dec = (sp - mp) * (1 - l) / s. Idle machines concede the most.
  kLoadScaled,
  /// dec = (sp - mp) / (s * (1 - l)). Kept for comparison runs only.
  kLiteral,
};

struct PricingConfig {
  Money start_price;
  Money min_price;
  std::int64_t anticipated_rounds = 3;
  /// When false, a request priced under the floor is declined outright.
  bool best_offer_enabled = true;
  DecrementFormula formula = DecrementFormula::kLoadScaled;

  /// Throws ConfigError unless sp >= mp > 0 and s >= 1.
  void validate() const;
};

/// Fraction of the machine allocated when the job would run, held exactly.
class LoadSnapshot {
 public:
  LoadSnapshot() = default;
  LoadSnapshot(std::int64_t occupied_cores, std::int64_t total_cores);
  explicit LoadSnapshot(Rational fraction);

  const Rational& fraction() const { return fraction_; }
  double as_double() const;

 private:
  Rational fraction_{0};
};

/// Exact per-round price reduction.
Rational decrement_exact(const PricingConfig& config, const LoadSnapshot& load);
/// Same, rounded half-up to cents. With the literal formula and l = 1 the
/// value is unbounded; callers clamp at the floor.
Money decrement(const PricingConfig& config, const LoadSnapshot& load);
/// The amount a resource is willing to shave off a request; equals decrement().
Money attractiveness(const PricingConfig& config, const LoadSnapshot& load);

struct Bid {
  Money price;
  bool operator==(const Bid&) const = default;
};
/// Non-binding proposal at the floor price for a request priced below it.
struct BestOffer {
  Money price;
  bool operator==(const BestOffer&) const = default;
};
struct Decline {
  bool operator==(const Decline&) const = default;
};
using OfferDecision = std::variant<Bid, BestOffer, Decline>;

OfferDecision make_offer(const PricingConfig& config, const LoadSnapshot& load, Money requested_price);

}  // namespace ramp::pricing
