#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fairfare/money.hpp"
#include "fairfare/timeutil.hpp"

namespace fairfare {

enum class ActivityType { rideshare, delivery, other };
enum class ActivityStatus { completed, cancelled };

std::string_view to_string(ActivityType type);
std::string_view to_string(ActivityStatus status);
ActivityType parse_activity_type(std::string_view text);
ActivityStatus parse_activity_status(std::string_view text);

// One trip record as delivered by the payroll-data provider. Fields the
// provider may omit on incomplete records are optional; cleaning drops
// rows that miss anything the take-rate math or the summaries need.
struct RideActivity {
  std::string activity_id;
  std::string driver_id;
  ActivityType activity_type = ActivityType::rideshare;
  ActivityStatus status = ActivityStatus::completed;
  std::optional<Timestamp> start_time;
  std::optional<Timestamp> end_time;
  std::optional<double> distance_miles;
  std::optional<double> duration_minutes;
  std::optional<std::string> start_zip;
  std::optional<std::string> end_zip;
  // Total consumer charge, tip included.
  std::optional<Cents> rider_price_usd;
  // May be negative when the platform subsidizes a ride.
  std::optional<Cents> platform_fees_usd;
  std::optional<Cents> base_pay_usd;
  std::optional<Cents> tips_usd;
  // Never part of the take rate.
  std::optional<Cents> bonus_usd;
  bool surge_flag = false;
  std::string source_payload_digest;

  friend bool operator==(RideActivity const&, RideActivity const&) = default;
};

// Every field the analysis relies on is present.
bool has_required_fields(RideActivity const& activity);

// Structural problems that make a record unstorable (empty id, end before
// start, negative distance or pay components). nullopt when fine.
std::optional<std::string> validate(RideActivity const& activity);

// Canonical JSON: exactly the RideActivity field names, absent optionals
// as null, money as decimal dollars with at most two fractional digits.
nlohmann::json to_json(RideActivity const& activity);
RideActivity activity_from_json(nlohmann::json const& j);

// SHA-256 of the canonical JSON with source_payload_digest and driver_id
// blanked: it fingerprints what the provider said about the ride, not who
// the platform filed it under.
std::string compute_payload_digest(RideActivity const& activity);

}  // namespace fairfare
