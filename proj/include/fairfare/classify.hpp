#pragma once

#include <set>
#include <string>

#include "fairfare/ride_activity.hpp"

namespace fairfare {

using ZipSet = std::set<std::string, std::less<>>;

struct RideCategory {
  bool airport = false;
  bool surge = false;
};

// True when either endpoint lies in an airport zip. Missing zips never
// match. An empty zip set is a contract violation.
bool classify_airport(RideActivity const& activity, ZipSet const& airport_zips);

RideCategory categorize(RideActivity const& activity, ZipSet const& airport_zips);

// Completed rideshare with every required field present.
bool is_analyzable(RideActivity const& activity);

}  // namespace fairfare
