#include "fairfare/pipeline/cleaning.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "fairfare/take_rate.hpp"

namespace fairfare::pipeline {

std::string_view to_string(ExclusionReason reason) {
  switch (reason) {
    case ExclusionReason::non_rideshare: return "non_rideshare";
    case ExclusionReason::cancelled: return "cancelled";
    case ExclusionReason::missing_fields: return "missing_fields";
    case ExclusionReason::undefined_take_rate: return "undefined_take_rate";
    case ExclusionReason::negative_take_rate: return "negative_take_rate";
  }
  return "";
}

std::size_t CleaningReport::excluded_total() const {
  return std::accumulate(excluded.begin(), excluded.end(), std::size_t{0});
}

std::optional<ExclusionReason> exclusion_reason(RideActivity const& a) {
  if (a.activity_type != ActivityType::rideshare) return ExclusionReason::non_rideshare;
  if (a.status != ActivityStatus::completed) return ExclusionReason::cancelled;
  if (!has_required_fields(a)) return ExclusionReason::missing_fields;
  TakeRate const rate =
      compute_take_rate(*a.platform_fees_usd, *a.rider_price_usd, *a.tips_usd);
  if (!rate.defined()) return ExclusionReason::undefined_take_rate;
  if (rate.pct() < 0.0) return ExclusionReason::negative_take_rate;
  return std::nullopt;
}

CleanResult clean(std::span<RideActivity const> activities) {
  CleanResult out;
  out.report.input_count = activities.size();
  for (RideActivity const& a : activities) {
    if (auto reason = exclusion_reason(a)) {
      ++out.report.excluded[static_cast<std::size_t>(*reason)];
      continue;
    }
    double const pct =
        compute_take_rate(*a.platform_fees_usd, *a.rider_price_usd, *a.tips_usd).pct();
    out.retained.push_back(CleanRide{a, pct});
  }
  std::sort(out.retained.begin(), out.retained.end(),
            [](CleanRide const& x, CleanRide const& y) {
              return std::tie(*x.activity.start_time, x.activity.activity_id) <
                     std::tie(*y.activity.start_time, y.activity.activity_id);
            });
  out.report.retained_count = out.retained.size();
  return out;
}

nlohmann::json to_json(CleaningReport const& r) {
  nlohmann::json excluded = nlohmann::json::object();
  for (auto reason : kExclusionOrder) excluded[std::string(to_string(reason))] = r.count(reason);
  return {{"input_count", r.input_count},
       {"retained_count", r.retained_count},
       {"excluded", excluded}};
}

CleaningReport cleaning_report_from_json(nlohmann::json const& j) {
  CleaningReport r;
  r.input_count = j.at("input_count").get<std::size_t>();
  r.retained_count = j.at("retained_count").get<std::size_t>();
  for (auto reason : kExclusionOrder) {
    r.excluded[static_cast<std::size_t>(reason)] =
        j.at("excluded").at(std::string(to_string(reason))).get<std::size_t>();
  }
  return r;
}

}  // namespace fairfare::pipeline
