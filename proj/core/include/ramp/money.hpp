#pragma once

#include <boost/rational.hpp>

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <string>

namespace ramp {

using Rational = boost::rational<std::int64_t>;

/// Fixed-point currency amount with two fractional digits.
///
/// All arithmetic that can produce fractions of a cent goes through
/// Rational and is brought back with from_rational(), which rounds half-up.
class Money {
 public:
  constexpr Money() = default;

  static constexpr Money from_cents(std::int64_t cents) { return Money(cents); }
  static Money from_units(std::int64_t units) { return Money(units * 100); }
  /// Rounds half-up (away from zero for negative values) to the nearest cent.
  static Money from_double(double value);
  static Money from_rational(const Rational& value);
  /// Accepts "70", "68.5", "16.67", "-3.10".
  static Money parse(const std::string& text);

  constexpr std::int64_t cents() const { return cents_; }
  double to_double() const { return static_cast<double>(cents_) / 100.0; }
  Rational to_rational() const { return Rational(cents_, 100); }
  /// Always renders two fractional digits, e.g. "68.00".
  std::string to_string() const;

  constexpr auto operator<=>(const Money&) const = default;

  constexpr Money operator+(Money o) const { return Money(cents_ + o.cents_); }
  constexpr Money operator-(Money o) const { return Money(cents_ - o.cents_); }
  constexpr Money operator-() const { return Money(-cents_); }
  Money& operator+=(Money o) {
    cents_ += o.cents_;
    return *this;
  }
  Money& operator-=(Money o) {
    cents_ -= o.cents_;
    return *this;
  }

 private:
  constexpr explicit Money(std::int64_t cents) : cents_(cents) {}
  std::int64_t cents_ = 0;
};

std::ostream& operator<<(std::ostream& os, Money m);

/// Rounds a rational to the nearest integer, halves away from zero.
std::int64_t round_half_up(const Rational& value);

}  // namespace ramp
