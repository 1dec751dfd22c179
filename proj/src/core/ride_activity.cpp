#include "fairfare/ride_activity.hpp"

#include <cmath>

#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"

namespace fairfare {

using nlohmann::json;

std::string_view to_string(ActivityType type) {
  switch (type) {
    case ActivityType::rideshare: return "rideshare";
    case ActivityType::delivery: return "delivery";
    case ActivityType::other: return "other";
  }
  return "other";
}

std::string_view to_string(ActivityStatus status) {
  return status == ActivityStatus::completed ? "completed" : "cancelled";
}

ActivityType parse_activity_type(std::string_view text) {
  if (text == "rideshare") return ActivityType::rideshare;
  if (text == "delivery") return ActivityType::delivery;
  if (text == "other") return ActivityType::other;
  throw Error(ErrorCode::bad_request,
              "unknown activity_type: " + std::string(text));
}

ActivityStatus parse_activity_status(std::string_view text) {
  if (text == "completed") return ActivityStatus::completed;
  if (text == "cancelled") return ActivityStatus::cancelled;
  throw Error(ErrorCode::bad_request, "unknown status: " + std::string(text));
}

bool has_required_fields(RideActivity const& a) {
  return a.start_time && a.end_time && a.distance_miles && a.duration_minutes &&
         a.rider_price_usd && a.platform_fees_usd && a.base_pay_usd &&
         a.tips_usd;
}

std::optional<std::string> validate(RideActivity const& a) {
  if (a.activity_id.empty()) return "activity_id is empty";
  if (a.driver_id.empty()) return "driver_id is empty";
  if (a.start_time && a.end_time && *a.end_time < *a.start_time) {
    return "end_time precedes start_time";
  }
  auto bad_decimal = [](std::optional<double> const& v) {
    return v && (!std::isfinite(*v) || *v < 0.0);
  };
  if (bad_decimal(a.distance_miles)) return "distance_miles is negative";
  if (bad_decimal(a.duration_minutes)) return "duration_minutes is negative";
  auto negative = [](std::optional<Cents> const& v) {
    return v && v->value() < 0;
  };
  if (negative(a.base_pay_usd)) return "base_pay_usd is negative";
  if (negative(a.tips_usd)) return "tips_usd is negative";
  if (negative(a.bonus_usd)) return "bonus_usd is negative";
  auto bad_zip = [](std::optional<std::string> const& z) {
    return z && z->size() != 5;
  };
  if (bad_zip(a.start_zip) || bad_zip(a.end_zip)) {
    return "postal codes must be 5 characters";
  }
  return std::nullopt;
}

namespace {

template <typename T, typename F>
json optional_json(std::optional<T> const& v, F&& convert) {
  if (!v) return nullptr;
  return convert(*v);
}

json money_json(std::optional<Cents> const& v) {
  return optional_json(v, [](Cents c) { return json(c.usd()); });
}

json const& field(json const& j, char const* name) {
  static json const null_value = nullptr;
  auto it = j.find(name);
  return it == j.end() ? null_value : *it;
}

std::optional<Cents> money_field(json const& j, char const* name) {
  json const& v = field(j, name);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) {
    throw Error(ErrorCode::bad_request, std::string(name) + " is not a number");
  }
  try {
    return Cents::from_usd(v.get<double>());
  } catch (Error const& e) {
    throw Error(ErrorCode::bad_request, std::string(name) + ": " + e.what());
  }
}

std::optional<double> decimal_field(json const& j, char const* name) {
  json const& v = field(j, name);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) {
    throw Error(ErrorCode::bad_request, std::string(name) + " is not a number");
  }
  return v.get<double>();
}

std::optional<std::string> string_field(json const& j, char const* name) {
  json const& v = field(j, name);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) {
    throw Error(ErrorCode::bad_request, std::string(name) + " is not a string");
  }
  return v.get<std::string>();
}

std::string required_string(json const& j, char const* name) {
  auto v = string_field(j, name);
  if (!v) throw Error(ErrorCode::bad_request, std::string(name) + " is missing");
  return *v;
}

std::optional<Timestamp> time_field(json const& j, char const* name) {
  auto v = string_field(j, name);
  if (!v) return std::nullopt;
  return parse_timestamp(*v);
}

}  // namespace

json to_json(RideActivity const& a) {
  auto ts = [](Timestamp t) { return json(format_timestamp(t)); };
  auto str = [](std::string const& s) { return json(s); };
  auto dec = [](double d) { return json(d); };
  return json{
      {"activity_id", a.activity_id},
      {"driver_id", a.driver_id},
      {"activity_type", to_string(a.activity_type)},
      {"status", to_string(a.status)},
      {"start_time", optional_json(a.start_time, ts)},
      {"end_time", optional_json(a.end_time, ts)},
      {"distance_miles", optional_json(a.distance_miles, dec)},
      {"duration_minutes", optional_json(a.duration_minutes, dec)},
      {"start_zip", optional_json(a.start_zip, str)},
      {"end_zip", optional_json(a.end_zip, str)},
      {"rider_price_usd", money_json(a.rider_price_usd)},
      {"platform_fees_usd", money_json(a.platform_fees_usd)},
      {"base_pay_usd", money_json(a.base_pay_usd)},
      {"tips_usd", money_json(a.tips_usd)},
      {"bonus_usd", money_json(a.bonus_usd)},
      {"surge_flag", a.surge_flag},
      {"source_payload_digest", a.source_payload_digest},
  };
}

RideActivity activity_from_json(json const& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::bad_request, "activity record is not an object");
  }
  RideActivity a;
  a.activity_id = required_string(j, "activity_id");
  a.driver_id = required_string(j, "driver_id");
  a.activity_type = parse_activity_type(required_string(j, "activity_type"));
  a.status = parse_activity_status(required_string(j, "status"));
  a.start_time = time_field(j, "start_time");
  a.end_time = time_field(j, "end_time");
  a.distance_miles = decimal_field(j, "distance_miles");
  a.duration_minutes = decimal_field(j, "duration_minutes");
  a.start_zip = string_field(j, "start_zip");
  a.end_zip = string_field(j, "end_zip");
  a.rider_price_usd = money_field(j, "rider_price_usd");
  a.platform_fees_usd = money_field(j, "platform_fees_usd");
  a.base_pay_usd = money_field(j, "base_pay_usd");
  a.tips_usd = money_field(j, "tips_usd");
  a.bonus_usd = money_field(j, "bonus_usd");
  json const& surge = field(j, "surge_flag");
  if (!surge.is_null() && !surge.is_boolean()) {
    throw Error(ErrorCode::bad_request, "surge_flag is not a boolean");
  }
  a.surge_flag = surge.is_boolean() && surge.get<bool>();
  a.source_payload_digest = string_field(j, "source_payload_digest").value_or("");
  return a;
}

std::string compute_payload_digest(RideActivity const& activity) {
  json j = to_json(activity);
  j["source_payload_digest"] = "";
  j["driver_id"] = "";
  return crypto::sha256_hex(j.dump());
}

}  // namespace fairfare
