#include "fairfare/money.hpp"

#include <cmath>
#include <cstdlib>

#include "fairfare/error.hpp"

namespace fairfare {

Cents Cents::from_usd(double usd) {
  if (!std::isfinite(usd)) {
    throw Error(ErrorCode::contract_violation, "money amount is not finite");
  }
  double const scaled = usd * 100.0;
  if (std::fabs(scaled) > 9.0e15) {
    throw Error(ErrorCode::contract_violation, "money amount out of range");
  }
  double const rounded = std::round(scaled);
  if (std::fabs(scaled - rounded) > 1e-6 * std::max(1.0, std::fabs(scaled))) {
    throw Error(ErrorCode::contract_violation,
                "money amount has more than two fractional digits");
  }
  return Cents(static_cast<std::int64_t>(rounded));
}

std::string Cents::to_string() const {
  std::int64_t const magnitude = std::llabs(value_);
  std::string out = value_ < 0 ? "-" : "";
  out += std::to_string(magnitude / 100);
  out += '.';
  std::int64_t const frac = magnitude % 100;
  if (frac < 10) out += '0';
  out += std::to_string(frac);
  return out;
}

}  // namespace fairfare
