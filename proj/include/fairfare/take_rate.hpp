#pragma once

#include <optional>
#include <string>

#include "fairfare/money.hpp"

namespace fairfare {

// Percentage of the tip-exclusive fare kept by the platform. An undefined
// rate (non-positive denominator) is a value in its own right.
class TakeRate {
 public:
  static TakeRate undefined() { return TakeRate(); }
  static TakeRate of(double pct) { return TakeRate(pct); }

  bool defined() const { return pct_.has_value(); }
  double pct() const;  // throws contract_violation when undefined
  // Rounded to 0.01 pp for reporting.
  double reported() const;

  friend bool operator==(TakeRate const&, TakeRate const&) = default;

 private:
  TakeRate() = default;
  explicit TakeRate(double pct) : pct_(pct) {}
  std::optional<double> pct_;
};

// fees / (rider_price - tips) * 100.
TakeRate compute_take_rate(Cents fees, Cents rider_price, Cents tips);

// Same formula on plain decimals; non-finite input is a contract violation.
TakeRate compute_take_rate(double fees, double rider_price, double tips);

double round_to(double value, int decimals);

struct TakeRateRecord {
  std::string activity_id;
  TakeRate take_rate;
};

}  // namespace fairfare
