#pragma once

#include <string>

#include "fairfare/timeutil.hpp"

namespace fairfare {

// Answers to the take-rate perception survey. At most one per driver.
struct SurveyResponse {
  std::string driver_id;
  double estimated_take_rate_pct = 0.0;
  double fair_take_rate_pct = 0.0;
  std::string factors_text;
  Timestamp submitted_at;

  friend bool operator==(SurveyResponse const&, SurveyResponse const&) = default;
};

}  // namespace fairfare
