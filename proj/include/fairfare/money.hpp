#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace fairfare {

// US dollars held as integer cents. Sums never touch floating point.
class Cents {
 public:
  constexpr Cents() = default;
  constexpr explicit Cents(std::int64_t value) : value_(value) {}

  // Converts a decimal dollar amount. Throws contract_violation on NaN,
  // infinities, or more than two fractional digits.
  static Cents from_usd(double usd);

  constexpr std::int64_t value() const { return value_; }
  double usd() const { return static_cast<double>(value_) / 100.0; }

  // "24.71", "-2.00"
  std::string to_string() const;

  constexpr Cents& operator+=(Cents other) {
    value_ += other.value_;
    return *this;
  }
  constexpr Cents& operator-=(Cents other) {
    value_ -= other.value_;
    return *this;
  }
  friend constexpr Cents operator+(Cents a, Cents b) { return a += b; }
  friend constexpr Cents operator-(Cents a, Cents b) { return a -= b; }
  friend constexpr Cents operator-(Cents a) { return Cents(-a.value_); }
  friend constexpr auto operator<=>(Cents, Cents) = default;

 private:
  std::int64_t value_ = 0;
};

}  // namespace fairfare
