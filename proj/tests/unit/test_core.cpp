#include <doctest.h>

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <limits>
#include <random>

#include "fairfare/classify.hpp"
#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"
#include "fairfare/money.hpp"
#include "fairfare/ride_activity.hpp"
#include "fairfare/take_rate.hpp"
#include "fairfare/timeutil.hpp"
#include "support/fixtures.hpp"

using namespace fairfare;

namespace {

double pct(double fees, double price, double tips) {
  return compute_take_rate(fees, price, tips).pct();
}

}  // namespace

TEST_CASE("take rate examples") {
  // Table 1 column means: fees 7.44 over a 24.71 ride price.
  CHECK(compute_take_rate(7.44, 24.71, 0.0).reported() == doctest::Approx(30.11));
  CHECK(std::fabs(compute_take_rate(7.44, 24.71, 0.0).pct() - 30.0) < 0.2);
  CHECK(pct(0.0, 20.0, 5.0) == 0.0);
  CHECK(pct(10.0, 10.0, 0.0) == 100.0);
  CHECK(pct(-2.0, 18.0, 2.0) == -12.5);
}

TEST_CASE("take rate is undefined, not zero, without a positive denominator") {
  CHECK_FALSE(compute_take_rate(1.0, 5.0, 5.0).defined());
  CHECK_FALSE(compute_take_rate(Cents(100), Cents(500), Cents(700)).defined());
  CHECK_THROWS_AS(compute_take_rate(1.0, 5.0, 5.0).pct(), Error);
}

TEST_CASE("non-finite inputs are contract violations") {
  double const nan = std::numeric_limits<double>::quiet_NaN();
  double const inf = std::numeric_limits<double>::infinity();
  for (auto [f, p, t] : {std::tuple{nan, 1.0, 0.0}, {1.0, inf, 0.0}, {1.0, 2.0, -inf}}) {
    try {
      compute_take_rate(f, p, t);
      FAIL("expected a throw");
    } catch (Error const& e) {
      CHECK(e.code() == ErrorCode::contract_violation);
    }
  }
}

TEST_CASE("take rate property: scale invariance and monotonicity in fees") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> money(1, 100000);
  for (int i = 0; i < 2000; ++i) {
    std::int64_t const tips = money(rng) / 4;
    std::int64_t const price = tips + money(rng);
    std::int64_t const fees = money(rng) % price - price / 5;
    std::int64_t const k = 1 + static_cast<std::int64_t>(rng() % 50);
    auto const base = compute_take_rate(Cents(fees), Cents(price), Cents(tips));
    auto const scaled = compute_take_rate(Cents(fees * k), Cents(price * k), Cents(tips * k));
    REQUIRE(base.defined());
    CHECK(scaled.pct() == doctest::Approx(base.pct()).epsilon(1e-12));
    auto const more = compute_take_rate(Cents(fees + 1), Cents(price), Cents(tips));
    CHECK(more.pct() > base.pct());
  }
}

TEST_CASE("cents round trip through dollars") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5000; ++i) {
    std::int64_t const v = static_cast<std::int64_t>(rng() % 2000000) - 1000000;
    Cents const c(v);
    CHECK(Cents::from_usd(c.usd()) == c);
  }
  CHECK(Cents::from_usd(24.71).to_string() == "24.71");
  CHECK(Cents(-200).to_string() == "-2.00");
  CHECK_THROWS_AS(Cents::from_usd(1.234), Error);
}

TEST_CASE("airport classification") {
  ZipSet const airport{"80249"};
  auto r = fixtures::ride("a", 100, 1000);
  r.start_zip = "80249";
  r.end_zip = "80202";
  CHECK(classify_airport(r, airport));
  r.start_zip = "80202";
  r.end_zip = "80203";
  CHECK_FALSE(classify_airport(r, airport));
  r.start_zip.reset();
  r.end_zip = "80249";
  CHECK(classify_airport(r, airport));
  r.end_zip.reset();
  CHECK_FALSE(classify_airport(r, airport));
  CHECK_THROWS_AS(classify_airport(r, ZipSet{}), Error);
}

TEST_CASE("airport classification is symmetric in endpoints") {
  std::mt19937_64 rng(3);
  ZipSet const airport{"80249", "80666"};
  std::vector<std::optional<std::string>> const zips = {std::nullopt, "80249", "80202", "80666", "80203"};
  for (int i = 0; i < 500; ++i) {
    auto r = fixtures::ride("a", 100, 1000);
    r.start_zip = zips[rng() % zips.size()];
    r.end_zip = zips[rng() % zips.size()];
    auto swapped = r;
    std::swap(swapped.start_zip, swapped.end_zip);
    CHECK(classify_airport(r, airport) == classify_airport(swapped, airport));
  }
}

TEST_CASE("is_analyzable") {
  auto r = fixtures::ride("a", 100, 1000);
  CHECK(is_analyzable(r));
  r.activity_type = ActivityType::delivery;
  CHECK_FALSE(is_analyzable(r));
  r = fixtures::ride("a", 100, 1000);
  r.status = ActivityStatus::cancelled;
  CHECK_FALSE(is_analyzable(r));
  r = fixtures::ride("a", 100, 1000);
  r.tips_usd.reset();
  CHECK_FALSE(is_analyzable(r));
  // Postal codes are not needed for the take-rate math.
  r = fixtures::ride("a", 100, 1000);
  r.start_zip.reset();
  r.end_zip.reset();
  CHECK(is_analyzable(r));
}

TEST_CASE("canonical JSON round trip is lossless") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 300; ++i) {
    auto r = fixtures::random_ride(rng, i);
    r.source_payload_digest = compute_payload_digest(r);
    auto const j = to_json(r);
    auto const back = activity_from_json(j);
    CHECK(back == r);
    CHECK(to_json(back).dump() == j.dump());
  }
}

TEST_CASE("shipped schema describes the canonical JSON exactly") {
  std::ifstream in(FAIRFARE_SCHEMA_DIR "/ride_activity.schema.json");
  REQUIRE(in);
  auto const schema = nlohmann::json::parse(in);
  auto const& props = schema.at("properties");
  std::set<std::string> declared, required;
  for (auto const& [k, v] : props.items()) declared.insert(k);
  for (auto const& k : schema.at("required")) required.insert(k.get<std::string>());
  CHECK(required == declared);

  auto resolve = [&](nlohmann::json const& p) -> nlohmann::json const& {
    if (!p.contains("$ref")) return p;
    auto const ref = p["$ref"].get<std::string>();
    return schema.at("$defs").at(ref.substr(ref.rfind('/') + 1));
  };
  auto type_of = [](nlohmann::json const& v) -> std::string {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return "boolean";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    return "other";
  };

  std::mt19937_64 rng(31);
  for (int i = 0; i < 200; ++i) {
    auto r = fixtures::random_ride(rng, i);
    if (i % 7 == 0) r.start_zip.reset();
    if (i % 11 == 0) r.end_time.reset();
    r.source_payload_digest = compute_payload_digest(r);
    auto const j = to_json(r);
    std::set<std::string> emitted;
    for (auto const& [k, v] : j.items()) {
      emitted.insert(k);
      REQUIRE(props.contains(k));
      auto const& rule = resolve(props[k]);
      if (rule.contains("enum")) {
        bool found = false;
        for (auto const& e : rule["enum"]) found = found || e == v;
        CHECK_MESSAGE(found, k << "=" << v.dump());
        continue;
      }
      auto const t = rule.at("type");
      std::set<std::string> allowed;
      if (t.is_string()) allowed.insert(t.get<std::string>());
      else for (auto const& x : t) allowed.insert(x.get<std::string>());
      CHECK_MESSAGE(allowed.count(type_of(v)), k << " has type " << type_of(v));
      if (rule.contains("pattern") && v.is_string()) {
        CHECK(std::regex_match(v.get<std::string>(), std::regex(rule["pattern"].get<std::string>())));
      }
    }
    CHECK(emitted == declared);
  }
}

TEST_CASE("activity JSON rejects malformed records") {
  auto j = to_json(fixtures::ride("a", 100, 1000));
  j["platform_fees_usd"] = "lots";
  CHECK_THROWS_AS(activity_from_json(j), Error);
  j = to_json(fixtures::ride("a", 100, 1000));
  j["activity_type"] = "spaceship";
  CHECK_THROWS_AS(activity_from_json(j), Error);
  CHECK_THROWS_AS(activity_from_json(nlohmann::json::array()), Error);
}

TEST_CASE("validate flags structural problems") {
  auto r = fixtures::ride("a", 100, 1000);
  CHECK_FALSE(validate(r).has_value());
  r.end_time = *r.start_time - std::chrono::seconds(1);
  CHECK(validate(r).has_value());
  r = fixtures::ride("a", 100, 1000);
  r.activity_id.clear();
  CHECK(validate(r).has_value());
  r = fixtures::ride("a", 100, 1000);
  r.tips_usd = Cents(-1);
  CHECK(validate(r).has_value());
  r = fixtures::ride("a", 100, 1000);
  r.start_zip = "8024";
  CHECK(validate(r).has_value());
  // Fees may be negative.
  r = fixtures::ride("a", -100, 1000);
  r.base_pay_usd = Cents(1100);
  CHECK_FALSE(validate(r).has_value());
}

TEST_CASE("payload digest ignores the digest field and tracks content") {
  auto r = fixtures::ride("a", 100, 1000);
  auto const d = compute_payload_digest(r);
  r.source_payload_digest = "anything";
  CHECK(compute_payload_digest(r) == d);
  r.tips_usd = Cents(1);
  CHECK(compute_payload_digest(r) != d);
}

TEST_CASE("timestamps and ISO weeks") {
  CHECK(format_timestamp(parse_timestamp("2022-03-01T12:34:56Z")) == "2022-03-01T12:34:56Z");
  CHECK(format_timestamp(parse_timestamp("2022-03-01")) == "2022-03-01T00:00:00Z");
  CHECK_THROWS_AS(parse_timestamp("yesterday"), Error);
  // 2021-01-03 is a Sunday that still belongs to 2020-W53.
  CHECK(iso_week(make_timestamp(2021, 1, 3)).to_string() == "2020-W53");
  CHECK(iso_week(make_timestamp(2021, 1, 4)).to_string() == "2021-W01");
  CHECK(iso_week(make_timestamp(2024, 12, 30)).to_string() == "2025-W01");
  CHECK(iso_week(make_timestamp(2022, 2, 3)).to_string() == "2022-W05");
  for (int d = 0; d < 2000; ++d) {
    auto const t = make_timestamp(2019, 1, 1) + std::chrono::days(d) + std::chrono::hours(d % 24);
    auto const w = iso_week(t);
    auto const start = iso_week_start(w);
    CHECK(start <= t);
    CHECK(t < start + std::chrono::days(7));
  }
}

TEST_CASE("crypto helpers") {
  CHECK(crypto::sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // RFC 4231 test case 2.
  CHECK(crypto::hmac_sha256_hex("Jefe", "what do ya want for nothing?") ==
        "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
  CHECK(crypto::random_hex(16).size() == 32);
  CHECK(crypto::random_hex(16) != crypto::random_hex(16));
  CHECK(crypto::constant_time_equal("abc", "abc"));
  CHECK_FALSE(crypto::constant_time_equal("abc", "abd"));
  CHECK_FALSE(crypto::constant_time_equal("abc", "abcd"));
}
