#include "ramp/money.hpp"

#include "ramp/error.hpp"

#include <cmath>
#include <cstdlib>
#include <ostream>

namespace ramp {

std::int64_t round_half_up(const Rational& value) {
  const std::int64_t num = value.numerator();
  const std::int64_t den = value.denominator();  // always > 0
  const std::int64_t q = num / den;
  const std::int64_t r = num % den;
  if (2 * std::llabs(r) >= den) {
    return num < 0 ? q - 1 : q + 1;
  }
  return q;
}

Money Money::from_double(double value) {
  const double scaled = value * 100.0;
  // Nudge away from representation error before rounding (e.g. 1.005).
  const double nudged = scaled + (scaled >= 0 ? 1e-9 : -1e-9);
  return Money(static_cast<std::int64_t>(std::llround(nudged)));
}

Money Money::from_rational(const Rational& value) {
  return Money(round_half_up(value * Rational(100)));
}

Money Money::parse(const std::string& text) {
  if (text.empty()) throw ParseError("empty currency amount");
  std::size_t pos = 0;
  bool negative = false;
  if (text[pos] == '-' || text[pos] == '+') {
    negative = text[pos] == '-';
    ++pos;
  }
  std::int64_t whole = 0;
  std::int64_t frac = 0;
  int frac_digits = 0;
  bool any_digit = false;
  bool round_up = false;
  for (; pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])); ++pos) {
    whole = whole * 10 + (text[pos] - '0');
    any_digit = true;
  }
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    for (; pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])); ++pos) {
      any_digit = true;
      if (frac_digits < 2) {
        frac = frac * 10 + (text[pos] - '0');
        ++frac_digits;
      } else if (frac_digits == 2) {
        round_up = text[pos] >= '5';
        ++frac_digits;
      }
    }
  }
  if (!any_digit || pos != text.size()) throw ParseError("invalid currency amount '" + text + "'");
  while (frac_digits < 2) {
    frac *= 10;
    ++frac_digits;
  }
  std::int64_t cents = whole * 100 + frac + (round_up ? 1 : 0);
  return Money(negative ? -cents : cents);
}

std::string Money::to_string() const {
  const std::int64_t a = std::llabs(cents_);
  std::string frac = std::to_string(a % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return (cents_ < 0 ? "-" : "") + std::to_string(a / 100) + "." + frac;
}

std::ostream& operator<<(std::ostream& os, Money m) { return os << m.to_string(); }

}  // namespace ramp
