#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/classify.hpp"
#include "fairfare/pipeline/cleaning.hpp"
#include "fairfare/pipeline/stats.hpp"
#include "fairfare/survey_response.hpp"
#include "fairfare/timeutil.hpp"

namespace fairfare::pipeline {

struct AggregateSummary {
  std::string group;
  std::size_t n_drivers = 0;
  std::size_t n_rides = 0;
  double mean_distance_miles = 0.0;
  double mean_duration_minutes = 0.0;
  double mean_rider_price_usd = 0.0;
  double mean_fees_usd = 0.0;
  double mean_base_pay_usd = 0.0;
  double mean_tips_usd = 0.0;
  double take_rate_mean_of_ratios = 0.0;
  // 100 * sum(fees) / sum(price - tips), from integer cents.
  double take_rate_ratio_of_means = 0.0;
};

struct RideGroup {
  std::string label;
  std::function<bool(CleanRide const&)> member;
};

struct SummaryTable {
  std::vector<AggregateSummary> rows;
  std::vector<std::string> notices;  // one per omitted empty group
};

// Nullopt when `rides` is empty.
std::optional<AggregateSummary> summarize_group(std::span<CleanRide const> rides,
                                                std::string label);
SummaryTable summarize(std::span<CleanRide const> rides, std::vector<RideGroup> const& groups);

// All / Surge / Airport rows.
std::vector<RideGroup> standard_groups(ZipSet airport_zips);

struct AffiliationInfo {
  std::string id;
  std::string name;
  std::optional<std::string> region_tag;
};
// One group per affiliation; a driver counts toward each of theirs.
std::vector<RideGroup> affiliation_groups(
    std::vector<AffiliationInfo> const& affiliations,
    std::function<std::vector<std::string>(std::string const&)> affiliations_of);

// One group per distinct region tag, plus the rides of drivers with no
// tagged affiliation ("non-<tag>" when there is a single tag, else
// "Other").
std::vector<RideGroup> region_groups(
    std::vector<AffiliationInfo> const& affiliations,
    std::function<std::vector<std::string>(std::string const&)> affiliations_of);

struct WeeklyPoint {
  IsoWeek week;
  double mean_take_rate_pct = 0.0;
  std::size_t n_rides = 0;
};

// Per-ride weighting; weeks without rides are absent.
std::vector<WeeklyPoint> weekly_series(std::span<CleanRide const> rides);

struct ComparisonResult {
  std::string label_a;
  std::string label_b;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  double bin_width = 0.5;
  // All of the following are absent when either side is empty.
  std::optional<double> mean_a;
  std::optional<double> mean_b;
  std::optional<double> mode_a;
  std::optional<double> mode_b;
  std::optional<double> p_value;
  std::string test_name;
  bool significant_at_05 = false;
  std::vector<HistogramBin> histogram_a;
  std::vector<HistogramBin> histogram_b;

  bool degenerate() const { return !p_value.has_value(); }
};

ComparisonResult compare(std::span<CleanRide const> rides,
                         std::function<bool(CleanRide const&)> const& in_a,
                         std::string label_a, std::string label_b, double bin_width);
ComparisonResult compare_airport(std::span<CleanRide const> rides, ZipSet const& airport_zips,
                                 double bin_width);
ComparisonResult compare_surge(std::span<CleanRide const> rides, double bin_width);

struct PerceptionComparison {
  std::size_t n_respondents = 0;
  // Absent when nobody qualifies.
  std::optional<double> mean_estimated_pct;
  std::optional<double> mean_fair_pct;
  std::optional<double> actual_pct;
};

// Respondents qualify with at least one retained ride; actual is the
// per-ride mean over all of their rides.
PerceptionComparison perception_vs_actual(std::span<SurveyResponse const> responses,
                                          std::span<CleanRide const> rides);

struct DistanceBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_pay_per_mile_usd = 0.0;
  std::size_t n_rides = 0;
};

inline constexpr double kMinRateDistanceMiles = 0.1;
std::vector<double> default_distance_edges();

// Bins are [edge_i, edge_i+1); rides shorter than 0.1 mi or outside the
// edges are skipped and empty bins omitted. Pay is base pay plus tips.
std::vector<DistanceBin> rate_per_mile(std::span<CleanRide const> rides,
                                       std::vector<double> const& edges);

struct PersonalSummary {
  std::size_t n_rides = 0;
  // Absent when cleaning left nothing to analyze.
  std::optional<double> average_pct;
  std::optional<double> highest_pct;
  std::optional<double> lowest_pct;
};

PersonalSummary personal_summary(std::span<CleanRide const> rides);

nlohmann::json to_json(AggregateSummary const& s);
AggregateSummary summary_from_json(nlohmann::json const& j);
nlohmann::json to_json(SummaryTable const& t);
SummaryTable summary_table_from_json(nlohmann::json const& j);
nlohmann::json to_json(std::vector<WeeklyPoint> const& series);
std::vector<WeeklyPoint> weekly_from_json(nlohmann::json const& j);
nlohmann::json to_json(ComparisonResult const& c);
ComparisonResult comparison_from_json(nlohmann::json const& j);
nlohmann::json to_json(PerceptionComparison const& p);
PerceptionComparison perception_from_json(nlohmann::json const& j);
nlohmann::json to_json(std::vector<DistanceBin> const& bins);
std::vector<DistanceBin> distance_bins_from_json(nlohmann::json const& j);
nlohmann::json to_json(PersonalSummary const& s);

}  // namespace fairfare::pipeline
