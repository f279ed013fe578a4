#include "ramp/pricing.hpp"

#include "ramp/error.hpp"

#include <algorithm>

namespace ramp::pricing {

void PricingConfig::validate() const {
  if (min_price.cents() <= 0) throw ConfigError("min_price must be positive");
  if (start_price < min_price) throw ConfigError("start_price must be >= min_price");
  if (anticipated_rounds < 1) throw ConfigError("anticipated_rounds must be >= 1");
}

LoadSnapshot::LoadSnapshot(std::int64_t occupied_cores, std::int64_t total_cores) {
  if (total_cores <= 0 || occupied_cores < 0) throw Error("invalid load snapshot");
  fraction_ = Rational(std::min(occupied_cores, total_cores), total_cores);
}

LoadSnapshot::LoadSnapshot(Rational fraction) : fraction_(fraction) {
  if (fraction < Rational(0) || fraction > Rational(1)) throw Error("load fraction outside [0, 1]");
}

double LoadSnapshot::as_double() const {
  return static_cast<double>(fraction_.numerator()) / static_cast<double>(fraction_.denominator());
}

Rational decrement_exact(const PricingConfig& config, const LoadSnapshot& load) {
  const Rational band = config.start_price.to_rational() - config.min_price.to_rational();
  const Rational idle = Rational(1) - load.fraction();
  const Rational rounds(config.anticipated_rounds);
  switch (config.formula) {
    case DecrementFormula::kLiteral:
      if (idle == Rational(0)) {
        // Unbounded concession; the floor clamp in make_offer takes over.
        return band == Rational(0) ? Rational(0) : band * Rational(1'000'000);
      }
      return band / (rounds * idle);
    case DecrementFormula::kLoadScaled:
    default:
      return band * idle / rounds;
  }
}

Money decrement(const PricingConfig& config, const LoadSnapshot& load) {
  return Money::from_rational(decrement_exact(config, load));
}

Money attractiveness(const PricingConfig& config, const LoadSnapshot& load) {
  return decrement(config, load);
}

OfferDecision make_offer(const PricingConfig& config, const LoadSnapshot& load, Money requested_price) {
  if (requested_price < config.min_price) {
    if (config.best_offer_enabled) return BestOffer{config.min_price};
    return Decline{};
  }
  const Rational offer = requested_price.to_rational() - decrement_exact(config, load);
  const Money rounded = Money::from_rational(offer);
  return Bid{std::clamp(rounded, config.min_price, requested_price)};
}

}  // namespace ramp::pricing
