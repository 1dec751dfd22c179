#include "fairfare/take_rate.hpp"

#include <cmath>

#include "fairfare/error.hpp"

namespace fairfare {

double TakeRate::pct() const {
  if (!pct_) {
    throw Error(ErrorCode::contract_violation, "take rate is undefined");
  }
  return *pct_;
}

double TakeRate::reported() const { return round_to(pct(), 2); }

double round_to(double value, int decimals) {
  double const scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

TakeRate compute_take_rate(Cents fees, Cents rider_price, Cents tips) {
  Cents const denominator = rider_price - tips;
  if (denominator.value() <= 0) return TakeRate::undefined();
  return TakeRate::of(100.0 * static_cast<double>(fees.value()) /
                      static_cast<double>(denominator.value()));
}

TakeRate compute_take_rate(double fees, double rider_price, double tips) {
  if (!std::isfinite(fees) || !std::isfinite(rider_price) ||
      !std::isfinite(tips)) {
    throw Error(ErrorCode::contract_violation,
                "take rate inputs must be finite");
  }
  double const denominator = rider_price - tips;
  if (!(denominator > 0.0)) return TakeRate::undefined();
  return TakeRate::of(100.0 * fees / denominator);
}

}  // namespace fairfare
