#include "fairfare/classify.hpp"

#include "fairfare/error.hpp"

namespace fairfare {

bool classify_airport(RideActivity const& activity, ZipSet const& airport_zips) {
  if (airport_zips.empty()) {
    throw Error(ErrorCode::contract_violation, "airport zip set is empty");
  }
  auto in_set = [&](std::optional<std::string> const& zip) {
    return zip && airport_zips.contains(*zip);
  };
  return in_set(activity.start_zip) || in_set(activity.end_zip);
}

RideCategory categorize(RideActivity const& activity, ZipSet const& airport_zips) {
  return RideCategory{classify_airport(activity, airport_zips),
                      activity.surge_flag};
}

bool is_analyzable(RideActivity const& activity) {
  return activity.activity_type == ActivityType::rideshare &&
         activity.status == ActivityStatus::completed &&
         has_required_fields(activity);
}

}  // namespace fairfare
