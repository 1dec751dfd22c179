#pragma once

// Shared fixture builders and independent oracles for the unit and
// acceptance suites. Nothing here calls into the code under test for the
// quantity being checked.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fairfare/ride_activity.hpp"
#include "fairfare/timeutil.hpp"

namespace fixtures {

using fairfare::Cents;
using fairfare::RideActivity;

// A complete, analyzable ride. Money in cents; price is tip-inclusive.
inline RideActivity ride(std::string id, std::int64_t fees, std::int64_t price,
                         std::int64_t tips = 0, std::string driver = "drv_a") {
  RideActivity a;
  a.activity_id = std::move(id);
  a.driver_id = std::move(driver);
  a.start_time = fairfare::make_timestamp(2022, 3, 1, 12);
  a.end_time = *a.start_time + std::chrono::minutes(20);
  a.distance_miles = 5.0;
  a.duration_minutes = 20.0;
  a.start_zip = "80202";
  a.end_zip = "80203";
  a.rider_price_usd = Cents(price);
  a.platform_fees_usd = Cents(fees);
  a.tips_usd = Cents(tips);
  a.base_pay_usd = Cents(price - tips - fees);
  a.bonus_usd = Cents(0);
  return a;
}

// 100 rows: 12 negative-fee, 8 delivery, 5 cancelled, 3 missing a field,
// 72 clean. Defects are disjoint so every rule claims exactly its own rows.
inline std::vector<RideActivity> defect_fixture() {
  std::vector<RideActivity> rows;
  int i = 0;
  auto next_id = [&] { return "fx_" + std::to_string(i++); };
  for (int k = 0; k < 72; ++k) rows.push_back(ride(next_id(), 600 + k, 2400 + 3 * k, k % 4 * 100));
  for (int k = 0; k < 12; ++k) {
    auto r = ride(next_id(), -150 - k, 1800, 200);
    r.base_pay_usd = Cents(1800 - 200 + 150 + k);
    rows.push_back(r);
  }
  for (int k = 0; k < 8; ++k) {
    auto r = ride(next_id(), 500, 2000);
    r.activity_type = fairfare::ActivityType::delivery;
    rows.push_back(r);
  }
  for (int k = 0; k < 5; ++k) {
    auto r = ride(next_id(), 500, 2000);
    r.status = fairfare::ActivityStatus::cancelled;
    rows.push_back(r);
  }
  {
    auto r = ride(next_id(), 500, 2000);
    r.platform_fees_usd.reset();
    rows.push_back(r);
    r = ride(next_id(), 500, 2000);
    r.end_time.reset();
    rows.push_back(r);
    r = ride(next_id(), 500, 2000);
    r.distance_miles.reset();
    rows.push_back(r);
  }
  // Scramble the order deterministically.
  std::mt19937_64 rng(99);
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

// Random ride with a good chance of every defect class, used by the
// property suites.
inline RideActivity random_ride(std::mt19937_64& rng, int index, int n_drivers = 4) {
  std::uniform_int_distribution<int> pick(0, 99);
  std::uniform_int_distribution<std::int64_t> price_d(300, 9000);
  RideActivity a = ride("r" + std::to_string(index), 0, price_d(rng), 0,
                        "drv_" + std::to_string(pick(rng) % n_drivers));
  std::int64_t const price = a.rider_price_usd->value();
  std::int64_t const tips = pick(rng) < 40 ? std::uniform_int_distribution<std::int64_t>(0, price)(rng) : 0;
  std::int64_t const fees =
      std::uniform_int_distribution<std::int64_t>(-price / 4, std::max<std::int64_t>(0, price - tips))(rng);
  a.tips_usd = Cents(tips);
  a.platform_fees_usd = Cents(fees);
  a.base_pay_usd = Cents(std::max<std::int64_t>(0, price - tips - fees));
  a.start_time = fairfare::make_timestamp(2021, 1, 1) +
                 std::chrono::hours(std::uniform_int_distribution<int>(0, 24 * 700)(rng));
  a.end_time = *a.start_time + std::chrono::minutes(pick(rng) + 1);
  a.distance_miles = std::uniform_real_distribution<double>(0.0, 30.0)(rng);
  a.duration_minutes = std::uniform_real_distribution<double>(1.0, 90.0)(rng);
  a.surge_flag = pick(rng) < 20;
  if (pick(rng) < 15) a.start_zip = "80249";
  int const defect = pick(rng);
  if (defect < 5) a.activity_type = fairfare::ActivityType::delivery;
  else if (defect < 10) a.status = fairfare::ActivityStatus::cancelled;
  else if (defect < 15) a.tips_usd.reset();
  else if (defect < 20) a.tips_usd = Cents(price);  // zero denominator
  return a;
}

// Brute-force per-group summary straight from the dollar fields.
struct OracleSummary {
  std::size_t n_drivers = 0, n_rides = 0;
  double distance = 0, duration = 0, price = 0, fees = 0, base = 0, tips = 0;
  double mean_of_ratios = 0, ratio_of_means = 0;
};

inline OracleSummary oracle_summary(std::vector<RideActivity> const& rides) {
  OracleSummary o;
  std::set<std::string> drivers;
  double rate_sum = 0, fee_sum = 0, den_sum = 0;
  for (auto const& r : rides) {
    drivers.insert(r.driver_id);
    double const price = r.rider_price_usd->usd(), fees = r.platform_fees_usd->usd(),
                 tips = r.tips_usd->usd();
    o.distance += *r.distance_miles;
    o.duration += *r.duration_minutes;
    o.price += price;
    o.fees += fees;
    o.base += r.base_pay_usd->usd();
    o.tips += tips;
    rate_sum += fees / (price - tips) * 100.0;
    fee_sum += fees;
    den_sum += price - tips;
  }
  double const n = static_cast<double>(rides.size());
  o.n_rides = rides.size();
  o.n_drivers = drivers.size();
  o.distance /= n;
  o.duration /= n;
  o.price /= n;
  o.fees /= n;
  o.base /= n;
  o.tips /= n;
  o.mean_of_ratios = rate_sum / n;
  o.ratio_of_means = fee_sum / den_sum * 100.0;
  return o;
}

// Permutation-test oracle for a two-sided rank comparison. U comes from
// pairwise counting; the null distribution from full enumeration when
// small, otherwise from `resamples` random relabelings.
inline double permutation_p(std::vector<double> const& a, std::vector<double> const& b,
                            std::uint64_t seed = 1, int resamples = 200000) {
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::size_t const n = pooled.size(), na = a.size();
  // Pairwise score of each element against the pool: wins + ties/2.
  std::vector<double> score(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (pooled[i] > pooled[j]) score[i] += 1.0;
      else if (pooled[i] == pooled[j]) score[i] += 0.5;
    }
  }
  // U for a labeling: pairwise wins of A over B = sum(score of A) minus
  // the within-A pairs, which is constant na(na-1)/2.
  double const within = static_cast<double>(na * (na - 1)) / 2.0;
  double const center = static_cast<double>(na * (n - na)) / 2.0;
  auto u_of = [&](std::vector<std::size_t> const& idx) {
    double s = 0;
    for (std::size_t k = 0; k < na; ++k) s += score[idx[k]];
    return s - within;
  };
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  double const observed = std::fabs(u_of(idx) - center) - 1e-9;

  double combos = 1.0;
  for (std::size_t k = 0; k < na; ++k) combos = combos * static_cast<double>(n - k) / static_cast<double>(k + 1);
  if (combos <= 300000) {
    std::vector<bool> mask(n, false);
    std::fill(mask.begin(), mask.begin() + static_cast<long>(na), true);
    double hits = 0, total = 0;
    std::vector<std::size_t> chosen(na);
    do {
      std::size_t c = 0;
      for (std::size_t i = 0; i < n; ++i) if (mask[i]) chosen[c++] = i;
      if (std::fabs(u_of(chosen) - center) >= observed) hits += 1;
      total += 1;
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return hits / total;
  }
  std::mt19937_64 rng(seed);
  double hits = 0;
  for (int r = 0; r < resamples; ++r) {
    for (std::size_t k = 0; k < na; ++k) {
      std::size_t const j = k + std::uniform_int_distribution<std::size_t>(0, n - 1 - k)(rng);
      std::swap(idx[k], idx[j]);
    }
    if (std::fabs(u_of(idx) - center) >= observed) hits += 1;
  }
  return hits / resamples;
}

}  // namespace fixtures
