#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/ride_activity.hpp"
#include "fairfare/timeutil.hpp"

namespace fairfare::provider {

// One segment of the commission schedule, in force from `from` until the
// next era begins. The mean take-rate fraction eases linearly from
// mean_start to mean_end across the segment; the last era holds
// mean_start. Zero dispersion means a flat commission.
struct FeeEra {
  Timestamp from;
  double mean_start = 0.25;
  double mean_end = 0.25;
  double dispersion = 0.0;
};

struct FeeModel {
  std::vector<FeeEra> eras;
  // Added to the per-ride fraction in variable-rate eras only.
  double surge_bump = 0.08;
  double airport_bump = 0.04;

  // Flat 25% until `cutover`, then 33% +/- 8 pp easing to 24% over two
  // years, then 24% +/- 8 pp.
  static FeeModel era_switching(Timestamp cutover);

  FeeEra const& era_at(Timestamp t) const;
  std::size_t era_index(Timestamp t) const;
  double mean_at(Timestamp t) const;
  // [from, to) of era i; `to` is far future for the last era.
  std::pair<Timestamp, Timestamp> era_bounds(std::size_t i) const;
};

struct GeneratorParams {
  int n_rides = 200;
  Timestamp span_start = make_timestamp(2019, 1, 1);
  Timestamp span_end = make_timestamp(2024, 8, 31);
  double surge_probability = 0.13;
  double airport_probability = 0.12;
  double delivery_probability = 0.05;
  double cancel_probability = 0.03;
  double negative_fee_probability = 0.0;
  double missing_field_probability = 0.0;
  FeeModel fee_model = FeeModel::era_switching(make_timestamp(2021, 1, 1));
  std::string airport_zip = "80249";
  double distance_median_miles = 6.0;
  double tip_probability = 0.5;

  // Throws validation on out-of-range probabilities, an empty span, or a
  // fee model that does not cover the span.
  void validate() const;
};

nlohmann::json to_json(GeneratorParams const& params);
// Missing keys keep their defaults.
GeneratorParams params_from_json(nlohmann::json const& j);

// Builds a deterministic history. `id_namespace` scopes activity ids so
// they are globally unique; `driver_ref` is written into each record.
std::vector<RideActivity> generate_history(GeneratorParams const& params,
                                           std::uint64_t seed,
                                           std::string const& id_namespace,
                                           std::string const& driver_ref);

// Rides for simulated day `day_index` (1-based) after the span end.
std::vector<RideActivity> generate_day(GeneratorParams const& params,
                                       std::uint64_t seed, int day_index,
                                       int n_rides,
                                       std::string const& id_namespace,
                                       std::string const& driver_ref);

// Zips the generator draws non-airport endpoints from.
std::vector<std::string> const& city_zips();

}  // namespace fairfare::provider
