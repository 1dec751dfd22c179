#include "fairfare/provider/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"

namespace fairfare::provider {

using nlohmann::json;
using namespace std::chrono;

FeeModel FeeModel::era_switching(Timestamp cutover) {
  auto const cut_day = floor<days>(cutover);
  year_month_day const ymd{cut_day};
  Timestamp const eased = sys_days(ymd + years(2)) + (cutover - cut_day);
  FeeModel model;
  model.eras = {
      FeeEra{make_timestamp(2000, 1, 1), 0.25, 0.25, 0.0},
      FeeEra{cutover, 0.33, 0.24, 0.08},
      FeeEra{eased, 0.24, 0.24, 0.08},
  };
  return model;
}

std::size_t FeeModel::era_index(Timestamp t) const {
  if (eras.empty() || t < eras.front().from) {
    throw Error(ErrorCode::contract_violation, "fee model does not cover " +
                                                   format_timestamp(t));
  }
  std::size_t i = 0;
  while (i + 1 < eras.size() && eras[i + 1].from <= t) ++i;
  return i;
}

FeeEra const& FeeModel::era_at(Timestamp t) const { return eras[era_index(t)]; }

double FeeModel::mean_at(Timestamp t) const {
  std::size_t const i = era_index(t);
  FeeEra const& era = eras[i];
  if (i + 1 == eras.size()) return era.mean_start;
  double const span = static_cast<double>((eras[i + 1].from - era.from).count());
  double const pos = static_cast<double>((t - era.from).count()) / span;
  return era.mean_start + (era.mean_end - era.mean_start) * pos;
}

std::pair<Timestamp, Timestamp> FeeModel::era_bounds(std::size_t i) const {
  Timestamp const to = i + 1 < eras.size() ? eras[i + 1].from
                                           : make_timestamp(9999, 12, 31);
  return {eras.at(i).from, to};
}

void GeneratorParams::validate() const {
  auto probability = [](double p, char const* name) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw Error(ErrorCode::validation,
                  std::string(name) + " must be within [0, 1]");
    }
  };
  if (n_rides < 0) throw Error(ErrorCode::validation, "n_rides must be >= 0");
  if (!(span_start < span_end)) {
    throw Error(ErrorCode::validation, "date span is empty");
  }
  probability(surge_probability, "surge_probability");
  probability(airport_probability, "airport_probability");
  probability(delivery_probability, "delivery_probability");
  probability(cancel_probability, "cancel_probability");
  probability(negative_fee_probability, "negative_fee_probability");
  probability(missing_field_probability, "missing_field_probability");
  probability(tip_probability, "tip_probability");
  if (fee_model.eras.empty() || span_start < fee_model.eras.front().from) {
    throw Error(ErrorCode::validation, "fee model does not cover date span");
  }
  for (std::size_t i = 0; i < fee_model.eras.size(); ++i) {
    FeeEra const& era = fee_model.eras[i];
    if (i > 0 && !(fee_model.eras[i - 1].from < era.from)) {
      throw Error(ErrorCode::validation, "fee eras must be strictly ordered");
    }
    probability(era.mean_start, "fee era mean_start");
    probability(era.mean_end, "fee era mean_end");
    if (!std::isfinite(era.dispersion) || era.dispersion < 0.0) {
      throw Error(ErrorCode::validation, "fee era dispersion must be >= 0");
    }
  }
  if (airport_zip.size() != 5) {
    throw Error(ErrorCode::validation, "airport_zip must be 5 characters");
  }
  if (!(distance_median_miles > 0.0)) {
    throw Error(ErrorCode::validation, "distance median must be positive");
  }
}

json to_json(GeneratorParams const& p) {
  json eras = json::array();
  for (FeeEra const& e : p.fee_model.eras) {
    eras.push_back({{"from", format_timestamp(e.from)},
                    {"mean_start", e.mean_start},
                    {"mean_end", e.mean_end},
                    {"dispersion", e.dispersion}});
  }
  return json{
      {"n_rides", p.n_rides},
      {"date_span",
       {{"start", format_timestamp(p.span_start)},
        {"end", format_timestamp(p.span_end)}}},
      {"surge_probability", p.surge_probability},
      {"airport_probability", p.airport_probability},
      {"delivery_probability", p.delivery_probability},
      {"cancel_probability", p.cancel_probability},
      {"negative_fee_probability", p.negative_fee_probability},
      {"missing_field_probability", p.missing_field_probability},
      {"fee_model",
       {{"eras", eras},
        {"surge_bump", p.fee_model.surge_bump},
        {"airport_bump", p.fee_model.airport_bump}}},
      {"airport_zip", p.airport_zip},
      {"distance_median_miles", p.distance_median_miles},
      {"tip_probability", p.tip_probability},
  };
}

GeneratorParams params_from_json(json const& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::bad_request, "generator params must be an object");
  }
  GeneratorParams p;
  try {
    p.n_rides = j.value("n_rides", p.n_rides);
    if (j.contains("date_span")) {
      p.span_start = parse_timestamp(j["date_span"].at("start").get<std::string>());
      p.span_end = parse_timestamp(j["date_span"].at("end").get<std::string>());
    }
    p.surge_probability = j.value("surge_probability", p.surge_probability);
    p.airport_probability = j.value("airport_probability", p.airport_probability);
    p.delivery_probability = j.value("delivery_probability", p.delivery_probability);
    p.cancel_probability = j.value("cancel_probability", p.cancel_probability);
    p.negative_fee_probability =
        j.value("negative_fee_probability", p.negative_fee_probability);
    p.missing_field_probability =
        j.value("missing_field_probability", p.missing_field_probability);
    if (j.contains("era_cutover")) {
      p.fee_model =
          FeeModel::era_switching(parse_timestamp(j["era_cutover"].get<std::string>()));
    }
    if (j.contains("fee_model")) {
      json const& fm = j["fee_model"];
      if (fm.contains("eras")) {
        p.fee_model.eras.clear();
        for (json const& e : fm["eras"]) {
          FeeEra era;
          era.from = parse_timestamp(e.at("from").get<std::string>());
          era.mean_start = e.at("mean_start").get<double>();
          era.mean_end = e.value("mean_end", era.mean_start);
          era.dispersion = e.value("dispersion", 0.0);
          p.fee_model.eras.push_back(era);
        }
      }
      p.fee_model.surge_bump = fm.value("surge_bump", p.fee_model.surge_bump);
      p.fee_model.airport_bump = fm.value("airport_bump", p.fee_model.airport_bump);
    }
    p.airport_zip = j.value("airport_zip", p.airport_zip);
    p.distance_median_miles =
        j.value("distance_median_miles", p.distance_median_miles);
    p.tip_probability = j.value("tip_probability", p.tip_probability);
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request,
                std::string("malformed generator params: ") + e.what());
  }
  return p;
}

std::vector<std::string> const& city_zips() {
  static std::vector<std::string> const zips = {
      "80202", "80203", "80204", "80205", "80206", "80207", "80209", "80210",
      "80211", "80218", "80219", "80220", "80222", "80223", "80224", "80230",
      "80231", "80237", "80238", "80239"};
  return zips;
}

namespace {

// Engine output is specified by the standard; the transforms below are
// written out so histories are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double const u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  double lognormal(double mu, double sigma) {
    return std::exp(mu + sigma * normal());
  }

 private:
  std::mt19937_64 engine_;
};

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RideActivity build_ride(Rng& rng, GeneratorParams const& params, Timestamp start,
                        std::string const& id_key, std::string const& driver_ref) {
  RideActivity a;
  a.activity_id = "gig_" + crypto::sha256_hex(id_key).substr(0, 24);
  a.driver_id = driver_ref;
  a.activity_type = rng.bernoulli(params.delivery_probability)
                        ? ActivityType::delivery
                        : ActivityType::rideshare;
  a.status = rng.bernoulli(params.cancel_probability) ? ActivityStatus::cancelled
                                                       : ActivityStatus::completed;
  bool const rideshare = a.activity_type == ActivityType::rideshare;
  bool const completed = a.status == ActivityStatus::completed;
  a.surge_flag = rideshare && rng.bernoulli(params.surge_probability);
  bool const airport = rideshare && rng.bernoulli(params.airport_probability);

  double const median =
      rideshare ? params.distance_median_miles : params.distance_median_miles / 2;
  double distance = completed ? round2(rng.lognormal(std::log(median), 0.7))
                              : round2(rng.uniform(0.0, 1.0));
  double const duration =
      round2(distance * 2.2 * rng.lognormal(0.0, 0.25) + 2.0);
  a.distance_miles = distance;
  a.duration_minutes = duration;
  a.start_time = start;
  a.end_time = start + seconds(static_cast<std::int64_t>(duration * 60.0));

  std::string const& city = city_zips()[rng.index(city_zips().size())];
  std::string const& other = city_zips()[rng.index(city_zips().size())];
  a.start_zip = city;
  a.end_zip = other;
  if (airport) {
    if (rng.bernoulli(0.5)) a.start_zip = params.airport_zip;
    else a.end_zip = params.airport_zip;
  }

  std::int64_t net = std::llround(100.0 * (2.55 + 1.05 * distance + 0.28 * duration));
  if (a.surge_flag) net = std::llround(static_cast<double>(net) * rng.uniform(1.2, 2.0));
  if (!completed) net = 500;
  net = std::max<std::int64_t>(net, 500);

  FeeModel const& fm = params.fee_model;
  FeeEra const& era = fm.era_at(start);
  double const mean = fm.mean_at(start);
  bool const variable = era.dispersion > 0.0;
  bool const negative = rng.bernoulli(params.negative_fee_probability);
  double const noise = rng.normal();
  std::int64_t fees = 0;
  if (negative) {
    fees = -std::llround(rng.uniform(0.02, 0.15) * static_cast<double>(net));
  } else if (!variable) {
    // Flat commission: pad the fare so the commission is a whole number of
    // cents and the take rate is exact.
    auto const bp = static_cast<std::int64_t>(std::llround(mean * 10000.0));
    std::int64_t const granularity = 10000 / std::gcd(bp == 0 ? 10000 : bp, 10000);
    net = (net + granularity - 1) / granularity * granularity;
    fees = net * bp / 10000;
  } else {
    double fraction = mean + era.dispersion * noise;
    if (a.surge_flag) fraction += fm.surge_bump;
    if (airport) fraction += fm.airport_bump;
    fraction = std::clamp(fraction, 0.01, 0.80);
    fees = std::llround(fraction * static_cast<double>(net));
  }

  std::int64_t tips = 0;
  if (rideshare && completed && rng.bernoulli(params.tip_probability)) {
    tips = std::llround(rng.lognormal(std::log(3.0), 0.6) * 100.0);
  }
  std::int64_t const bonus =
      rng.bernoulli(0.04) ? static_cast<std::int64_t>(1 + rng.index(10)) * 100 : 0;

  a.platform_fees_usd = Cents(fees);
  a.base_pay_usd = Cents(net - fees);
  a.tips_usd = Cents(tips);
  a.bonus_usd = Cents(bonus);
  a.rider_price_usd = Cents(net + tips);

  if (rng.bernoulli(params.missing_field_probability)) {
    switch (rng.index(6)) {
      case 0: a.distance_miles.reset(); break;
      case 1: a.duration_minutes.reset(); break;
      case 2: a.rider_price_usd.reset(); break;
      case 3: a.platform_fees_usd.reset(); break;
      case 4: a.base_pay_usd.reset(); break;
      default: a.tips_usd.reset(); break;
    }
  }
  a.source_payload_digest = compute_payload_digest(a);
  return a;
}

}  // namespace

std::vector<RideActivity> generate_history(GeneratorParams const& params,
                                           std::uint64_t seed,
                                           std::string const& id_namespace,
                                           std::string const& driver_ref) {
  params.validate();
  Rng rng(mix(seed, 0));
  auto const span = (params.span_end - params.span_start).count();
  std::vector<Timestamp> starts;
  starts.reserve(static_cast<std::size_t>(params.n_rides));
  for (int i = 0; i < params.n_rides; ++i) {
    auto const offset = static_cast<std::int64_t>(rng.uniform() * static_cast<double>(span));
    starts.push_back(params.span_start + seconds(offset));
  }
  std::sort(starts.begin(), starts.end());
  std::vector<RideActivity> out;
  out.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    out.push_back(build_ride(rng, params, starts[i],
                             id_namespace + ":" + std::to_string(i), driver_ref));
  }
  return out;
}

std::vector<RideActivity> generate_day(GeneratorParams const& params,
                                       std::uint64_t seed, int day_index,
                                       int n_rides,
                                       std::string const& id_namespace,
                                       std::string const& driver_ref) {
  params.validate();
  Rng rng(mix(seed, static_cast<std::uint64_t>(day_index)));
  Timestamp const day_start =
      floor<days>(params.span_end) + days(day_index);
  std::vector<Timestamp> starts;
  for (int i = 0; i < n_rides; ++i) {
    starts.push_back(day_start + seconds(static_cast<std::int64_t>(rng.uniform() * 86000.0)));
  }
  std::sort(starts.begin(), starts.end());
  std::vector<RideActivity> out;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    out.push_back(build_ride(rng, params, starts[i],
                             id_namespace + ":d" + std::to_string(day_index) + ":" +
                                 std::to_string(i),
                             driver_ref));
  }
  return out;
}

}  // namespace fairfare::provider
