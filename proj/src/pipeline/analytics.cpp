#include "fairfare/pipeline/analytics.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>

#include "fairfare/error.hpp"

namespace fairfare::pipeline {

using nlohmann::json;

namespace {

std::int64_t cents(std::optional<Cents> const& c) { return c->value(); }

double mean_usd(std::int64_t sum_cents, std::size_t n) {
  return static_cast<double>(sum_cents) / 100.0 / static_cast<double>(n);
}

json opt(std::optional<double> const& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_double(json const& j, char const* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

IsoWeek parse_iso_week(std::string const& text) {
  IsoWeek w;
  if (std::sscanf(text.c_str(), "%d-W%u", &w.year, &w.week) != 2) {
    throw Error(ErrorCode::bad_request, "bad ISO week: " + text);
  }
  return w;
}

double mean_of(std::vector<double> const& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

std::optional<AggregateSummary> summarize_group(std::span<CleanRide const> rides,
                                                std::string label) {
  if (rides.empty()) return std::nullopt;
  AggregateSummary s;
  s.group = std::move(label);
  s.n_rides = rides.size();
  std::set<std::string> drivers;
  double distance = 0.0, duration = 0.0, rate_sum = 0.0;
  std::int64_t price = 0, fees = 0, base = 0, tips = 0;
  for (CleanRide const& r : rides) {
    RideActivity const& a = r.activity;
    drivers.insert(a.driver_id);
    distance += *a.distance_miles;
    duration += *a.duration_minutes;
    price += cents(a.rider_price_usd);
    fees += cents(a.platform_fees_usd);
    base += cents(a.base_pay_usd);
    tips += cents(a.tips_usd);
    rate_sum += r.take_rate_pct;
  }
  double const n = static_cast<double>(rides.size());
  s.n_drivers = drivers.size();
  s.mean_distance_miles = distance / n;
  s.mean_duration_minutes = duration / n;
  s.mean_rider_price_usd = mean_usd(price, rides.size());
  s.mean_fees_usd = mean_usd(fees, rides.size());
  s.mean_base_pay_usd = mean_usd(base, rides.size());
  s.mean_tips_usd = mean_usd(tips, rides.size());
  s.take_rate_mean_of_ratios = rate_sum / n;
  // Every retained ride has a positive denominator, so the sum does too.
  s.take_rate_ratio_of_means =
      100.0 * static_cast<double>(fees) / static_cast<double>(price - tips);
  return s;
}

SummaryTable summarize(std::span<CleanRide const> rides, std::vector<RideGroup> const& groups) {
  SummaryTable table;
  for (RideGroup const& g : groups) {
    std::vector<CleanRide> members;
    for (CleanRide const& r : rides) {
      if (g.member(r)) members.push_back(r);
    }
    if (auto s = summarize_group(members, g.label)) {
      table.rows.push_back(std::move(*s));
    } else {
      table.notices.push_back("group '" + g.label + "' has no retained rides and was omitted");
    }
  }
  return table;
}

std::vector<RideGroup> standard_groups(ZipSet airport_zips) {
  return {
      RideGroup{"All", [](CleanRide const&) { return true; }},
      RideGroup{"Surge", [](CleanRide const& r) { return r.activity.surge_flag; }},
      RideGroup{"Airport",
                [zips = std::move(airport_zips)](CleanRide const& r) {
                  return classify_airport(r.activity, zips);
                }},
  };
}

std::vector<RideGroup> affiliation_groups(
    std::vector<AffiliationInfo> const& affiliations,
    std::function<std::vector<std::string>(std::string const&)> affiliations_of) {
  std::vector<RideGroup> groups;
  for (AffiliationInfo const& aff : affiliations) {
    groups.push_back(RideGroup{aff.name, [id = aff.id, affiliations_of](CleanRide const& r) {
                                 auto const ids = affiliations_of(r.activity.driver_id);
                                 return std::find(ids.begin(), ids.end(), id) != ids.end();
                               }});
  }
  return groups;
}

std::vector<RideGroup> region_groups(
    std::vector<AffiliationInfo> const& affiliations,
    std::function<std::vector<std::string>(std::string const&)> affiliations_of) {
  std::map<std::string, std::set<std::string>> tagged;  // tag -> affiliation ids
  for (AffiliationInfo const& aff : affiliations) {
    if (aff.region_tag) tagged[*aff.region_tag].insert(aff.id);
  }
  if (tagged.empty()) return {};
  auto in_tag = [affiliations_of](std::set<std::string> ids) {
    return [ids = std::move(ids), affiliations_of](CleanRide const& r) {
      for (auto const& id : affiliations_of(r.activity.driver_id)) {
        if (ids.contains(id)) return true;
      }
      return false;
    };
  };
  std::vector<RideGroup> groups;
  std::set<std::string> any;
  for (auto const& [tag, ids] : tagged) {
    groups.push_back(RideGroup{tag, in_tag(ids)});
    any.insert(ids.begin(), ids.end());
  }
  std::string const rest = tagged.size() == 1 ? "non-" + tagged.begin()->first : "Other";
  auto const member_of_any = in_tag(any);
  groups.push_back(RideGroup{rest, [member_of_any](CleanRide const& r) { return !member_of_any(r); }});
  return groups;
}

std::vector<WeeklyPoint> weekly_series(std::span<CleanRide const> rides) {
  std::map<IsoWeek, std::pair<double, std::size_t>> buckets;
  for (CleanRide const& r : rides) {
    auto& [sum, n] = buckets[iso_week(*r.activity.start_time)];
    sum += r.take_rate_pct;
    ++n;
  }
  std::vector<WeeklyPoint> out;
  out.reserve(buckets.size());
  for (auto const& [week, acc] : buckets) {
    out.push_back(WeeklyPoint{week, acc.first / static_cast<double>(acc.second), acc.second});
  }
  return out;
}

ComparisonResult compare(std::span<CleanRide const> rides,
                         std::function<bool(CleanRide const&)> const& in_a,
                         std::string label_a, std::string label_b, double bin_width) {
  if (!(bin_width > 0.0)) throw Error(ErrorCode::contract_violation, "bin width must be positive");
  ComparisonResult c;
  c.label_a = std::move(label_a);
  c.label_b = std::move(label_b);
  c.bin_width = bin_width;
  std::vector<double> a, b;
  for (CleanRide const& r : rides) (in_a(r) ? a : b).push_back(r.take_rate_pct);
  c.n_a = a.size();
  c.n_b = b.size();
  if (!a.empty()) c.histogram_a = histogram(a, bin_width);
  if (!b.empty()) c.histogram_b = histogram(b, bin_width);
  if (a.empty() || b.empty()) {
    c.test_name = "none (one side empty)";
    return c;
  }
  c.mean_a = mean_of(a);
  c.mean_b = mean_of(b);
  c.mode_a = mode_estimate(a, bin_width);
  c.mode_b = mode_estimate(b, bin_width);
  MannWhitneyResult const mw = mann_whitney_u(a, b);
  c.p_value = mw.p_value;
  c.test_name = mw.method;
  c.significant_at_05 = mw.p_value < 0.05;
  return c;
}

ComparisonResult compare_airport(std::span<CleanRide const> rides, ZipSet const& airport_zips,
                                 double bin_width) {
  return compare(
      rides, [&](CleanRide const& r) { return classify_airport(r.activity, airport_zips); },
      "Airport", "Non-airport", bin_width);
}

ComparisonResult compare_surge(std::span<CleanRide const> rides, double bin_width) {
  return compare(
      rides, [](CleanRide const& r) { return r.activity.surge_flag; }, "Surge", "Non-surge",
      bin_width);
}

PerceptionComparison perception_vs_actual(std::span<SurveyResponse const> responses,
                                          std::span<CleanRide const> rides) {
  std::map<std::string, std::vector<double>> by_driver;
  for (CleanRide const& r : rides) by_driver[r.activity.driver_id].push_back(r.take_rate_pct);

  PerceptionComparison p;
  std::vector<double> estimated, fair, actual;
  for (SurveyResponse const& resp : responses) {
    auto it = by_driver.find(resp.driver_id);
    if (it == by_driver.end()) continue;
    estimated.push_back(resp.estimated_take_rate_pct);
    fair.push_back(resp.fair_take_rate_pct);
    actual.insert(actual.end(), it->second.begin(), it->second.end());
  }
  p.n_respondents = estimated.size();
  if (estimated.empty()) return p;
  p.mean_estimated_pct = mean_of(estimated);
  p.mean_fair_pct = mean_of(fair);
  p.actual_pct = mean_of(actual);
  return p;
}

std::vector<double> default_distance_edges() { return {0, 2, 5, 10, 20, 50}; }

std::vector<DistanceBin> rate_per_mile(std::span<CleanRide const> rides,
                                       std::vector<double> const& edges) {
  if (edges.size() < 2) throw Error(ErrorCode::contract_violation, "need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw Error(ErrorCode::contract_violation, "bin edges must be strictly increasing");
    }
  }
  std::vector<double> sums(edges.size() - 1, 0.0);
  std::vector<std::size_t> counts(edges.size() - 1, 0);
  for (CleanRide const& r : rides) {
    double const d = *r.activity.distance_miles;
    if (d < kMinRateDistanceMiles) continue;
    auto const it = std::upper_bound(edges.begin(), edges.end(), d);
    if (it == edges.begin() || it == edges.end()) continue;
    auto const bin = static_cast<std::size_t>(it - edges.begin() - 1);
    std::int64_t const pay = cents(r.activity.base_pay_usd) + cents(r.activity.tips_usd);
    sums[bin] += static_cast<double>(pay) / 100.0 / d;
    ++counts[bin];
  }
  std::vector<DistanceBin> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    out.push_back(DistanceBin{edges[i], edges[i + 1],
                              sums[i] / static_cast<double>(counts[i]), counts[i]});
  }
  return out;
}

PersonalSummary personal_summary(std::span<CleanRide const> rides) {
  PersonalSummary s;
  s.n_rides = rides.size();
  if (rides.empty()) return s;
  double sum = 0.0;
  double hi = rides.front().take_rate_pct;
  double lo = hi;
  for (CleanRide const& r : rides) {
    sum += r.take_rate_pct;
    hi = std::max(hi, r.take_rate_pct);
    lo = std::min(lo, r.take_rate_pct);
  }
  // Clamp so highest >= average >= lowest survives summation rounding.
  s.average_pct = std::clamp(sum / static_cast<double>(rides.size()), lo, hi);
  s.highest_pct = hi;
  s.lowest_pct = lo;
  return s;
}

json to_json(AggregateSummary const& s) {
  return {{"group", s.group},
          {"n_drivers", s.n_drivers},
          {"n_rides", s.n_rides},
          {"mean_distance_miles", s.mean_distance_miles},
          {"mean_duration_minutes", s.mean_duration_minutes},
          {"mean_rider_price_usd", s.mean_rider_price_usd},
          {"mean_fees_usd", s.mean_fees_usd},
          {"mean_base_pay_usd", s.mean_base_pay_usd},
          {"mean_tips_usd", s.mean_tips_usd},
          {"take_rate_mean_of_ratios", s.take_rate_mean_of_ratios},
          {"take_rate_ratio_of_means", s.take_rate_ratio_of_means}};
}

AggregateSummary summary_from_json(json const& j) {
  AggregateSummary s;
  s.group = j.at("group").get<std::string>();
  s.n_drivers = j.at("n_drivers").get<std::size_t>();
  s.n_rides = j.at("n_rides").get<std::size_t>();
  s.mean_distance_miles = j.at("mean_distance_miles").get<double>();
  s.mean_duration_minutes = j.at("mean_duration_minutes").get<double>();
  s.mean_rider_price_usd = j.at("mean_rider_price_usd").get<double>();
  s.mean_fees_usd = j.at("mean_fees_usd").get<double>();
  s.mean_base_pay_usd = j.at("mean_base_pay_usd").get<double>();
  s.mean_tips_usd = j.at("mean_tips_usd").get<double>();
  s.take_rate_mean_of_ratios = j.at("take_rate_mean_of_ratios").get<double>();
  s.take_rate_ratio_of_means = j.at("take_rate_ratio_of_means").get<double>();
  return s;
}

json to_json(SummaryTable const& t) {
  json rows = json::array();
  for (auto const& r : t.rows) rows.push_back(to_json(r));
  return {{"rows", rows}, {"notices", t.notices}};
}

SummaryTable summary_table_from_json(json const& j) {
  SummaryTable t;
  for (json const& r : j.at("rows")) t.rows.push_back(summary_from_json(r));
  t.notices = j.at("notices").get<std::vector<std::string>>();
  return t;
}

json to_json(std::vector<WeeklyPoint> const& series) {
  json out = json::array();
  for (auto const& p : series) {
    out.push_back({{"iso_week", p.week.to_string()},
                   {"mean_take_rate_pct", p.mean_take_rate_pct},
                   {"n_rides", p.n_rides}});
  }
  return out;
}

std::vector<WeeklyPoint> weekly_from_json(json const& j) {
  std::vector<WeeklyPoint> out;
  for (json const& p : j) {
    out.push_back(WeeklyPoint{parse_iso_week(p.at("iso_week").get<std::string>()),
                              p.at("mean_take_rate_pct").get<double>(),
                              p.at("n_rides").get<std::size_t>()});
  }
  return out;
}

namespace {

json bins_json(std::vector<HistogramBin> const& bins) {
  json out = json::array();
  for (auto const& b : bins) out.push_back({{"lower", b.lower}, {"count", b.count}});
  return out;
}

std::vector<HistogramBin> bins_from(json const& j) {
  std::vector<HistogramBin> out;
  for (json const& b : j) out.push_back({b.at("lower").get<double>(), b.at("count").get<std::size_t>()});
  return out;
}

}  // namespace

json to_json(ComparisonResult const& c) {
  return {{"label_a", c.label_a},
          {"label_b", c.label_b},
          {"n_a", c.n_a},
          {"n_b", c.n_b},
          {"bin_width", c.bin_width},
          {"mean_a", opt(c.mean_a)},
          {"mean_b", opt(c.mean_b)},
          {"mode_a", opt(c.mode_a)},
          {"mode_b", opt(c.mode_b)},
          {"p_value", opt(c.p_value)},
          {"test_name", c.test_name},
          {"significant_at_05", c.significant_at_05},
          {"histogram_a", bins_json(c.histogram_a)},
          {"histogram_b", bins_json(c.histogram_b)}};
}

ComparisonResult comparison_from_json(json const& j) {
  ComparisonResult c;
  c.label_a = j.at("label_a").get<std::string>();
  c.label_b = j.at("label_b").get<std::string>();
  c.n_a = j.at("n_a").get<std::size_t>();
  c.n_b = j.at("n_b").get<std::size_t>();
  c.bin_width = j.at("bin_width").get<double>();
  c.mean_a = opt_double(j, "mean_a");
  c.mean_b = opt_double(j, "mean_b");
  c.mode_a = opt_double(j, "mode_a");
  c.mode_b = opt_double(j, "mode_b");
  c.p_value = opt_double(j, "p_value");
  c.test_name = j.at("test_name").get<std::string>();
  c.significant_at_05 = j.at("significant_at_05").get<bool>();
  c.histogram_a = bins_from(j.at("histogram_a"));
  c.histogram_b = bins_from(j.at("histogram_b"));
  return c;
}

json to_json(PerceptionComparison const& p) {
  return {{"n_respondents", p.n_respondents},
          {"mean_estimated_pct", opt(p.mean_estimated_pct)},
          {"mean_fair_pct", opt(p.mean_fair_pct)},
          {"actual_pct", opt(p.actual_pct)}};
}

PerceptionComparison perception_from_json(json const& j) {
  PerceptionComparison p;
  p.n_respondents = j.at("n_respondents").get<std::size_t>();
  p.mean_estimated_pct = opt_double(j, "mean_estimated_pct");
  p.mean_fair_pct = opt_double(j, "mean_fair_pct");
  p.actual_pct = opt_double(j, "actual_pct");
  return p;
}

json to_json(std::vector<DistanceBin> const& bins) {
  json out = json::array();
  for (auto const& b : bins) {
    out.push_back({{"lower_miles", b.lower},
                   {"upper_miles", b.upper},
                   {"mean_pay_per_mile_usd", b.mean_pay_per_mile_usd},
                   {"n_rides", b.n_rides}});
  }
  return out;
}

std::vector<DistanceBin> distance_bins_from_json(json const& j) {
  std::vector<DistanceBin> out;
  for (json const& b : j) {
    out.push_back(DistanceBin{b.at("lower_miles").get<double>(), b.at("upper_miles").get<double>(),
                              b.at("mean_pay_per_mile_usd").get<double>(),
                              b.at("n_rides").get<std::size_t>()});
  }
  return out;
}

json to_json(PersonalSummary const& s) {
  return {{"n_rides", s.n_rides},
          {"average_take_rate_pct", opt(s.average_pct)},
          {"highest_take_rate_pct", opt(s.highest_pct)},
          {"lowest_take_rate_pct", opt(s.lowest_pct)}};
}

}  // namespace fairfare::pipeline
