#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fairfare/ride_activity.hpp"

namespace fairfare::pipeline {

// Declaration order is the order rules are tried; a row is charged to the
// first rule it fails.
enum class ExclusionReason {
  non_rideshare,
  cancelled,
  missing_fields,
  undefined_take_rate,
  negative_take_rate,
};

inline constexpr std::array kExclusionOrder = {
    ExclusionReason::non_rideshare, ExclusionReason::cancelled,
    ExclusionReason::missing_fields, ExclusionReason::undefined_take_rate,
    ExclusionReason::negative_take_rate};

std::string_view to_string(ExclusionReason reason);

struct CleaningReport {
  std::size_t input_count = 0;
  std::size_t retained_count = 0;
  std::array<std::size_t, kExclusionOrder.size()> excluded{};

  std::size_t count(ExclusionReason reason) const {
    return excluded[static_cast<std::size_t>(reason)];
  }
  std::size_t excluded_total() const;

  friend bool operator==(CleaningReport const&, CleaningReport const&) = default;
};

// A retained ride with its take rate attached.
struct CleanRide {
  RideActivity activity;
  double take_rate_pct = 0.0;
};

struct CleanResult {
  std::vector<CleanRide> retained;  // sorted by (start_time, activity_id)
  CleaningReport report;
};

std::optional<ExclusionReason> exclusion_reason(RideActivity const& activity);

CleanResult clean(std::span<RideActivity const> activities);

nlohmann::json to_json(CleaningReport const& report);
CleaningReport cleaning_report_from_json(nlohmann::json const& j);

}  // namespace fairfare::pipeline
