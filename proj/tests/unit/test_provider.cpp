#include <doctest.h>

#include <cmath>
#include <set>
#include <thread>

#include "fairfare/classify.hpp"
#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"
#include "fairfare/http.hpp"
#include "fairfare/provider/client.hpp"
#include "fairfare/provider/generator.hpp"
#include "fairfare/provider/provider_mock.hpp"
#include "fairfare/take_rate.hpp"

using namespace fairfare;
using namespace fairfare::provider;
using nlohmann::json;

namespace {

struct Captured {
  std::vector<WebhookEvent> events;
  std::vector<std::string> bodies;
  std::vector<std::string> signatures;
};

ProviderMock::Options quiet_options() {
  ProviderMock::Options o;
  o.sleep = [](std::chrono::milliseconds) {};
  o.clock = [] { return make_timestamp(2024, 9, 1); };
  return o;
}

WebhookTransport capture(Captured& out, int status = 200) {
  return [&out, status](std::string const& body, std::string const& sig) {
    out.bodies.push_back(body);
    out.signatures.push_back(sig);
    out.events.push_back(event_from_json(json::parse(body)));
    return status;
  };
}

GeneratorParams with_rides(int n) {
  GeneratorParams p;
  p.n_rides = n;
  return p;
}

std::vector<RideActivity> full_scan(ProviderMock const& mock, std::string const& id, int limit) {
  std::vector<RideActivity> all;
  std::string cursor;
  do {
    auto page = mock.list_gigs(id, cursor, limit);
    all.insert(all.end(), page.data.begin(), page.data.end());
    cursor = page.next_cursor;
  } while (!cursor.empty());
  return all;
}

}  // namespace

TEST_CASE("generator is deterministic") {
  ProviderMock a(quiet_options()), b(quiet_options());
  auto const x = a.create_account("drv_1", with_rides(300), 42);
  auto const y = b.create_account("drv_1", with_rides(300), 42);
  CHECK(x.account_id == y.account_id);
  CHECK(a.history_digest(x.account_id) == b.history_digest(y.account_id));
  auto const z = b.create_account("drv_2", with_rides(300), 43);
  CHECK(b.history_digest(z.account_id) != a.history_digest(x.account_id));
}

TEST_CASE("generated records satisfy the accounting identity") {
  GeneratorParams p = with_rides(2000);
  p.negative_fee_probability = 0.05;
  auto const rows = generate_history(p, 3, "ns", "drv");
  int checked = 0;
  std::set<std::string> ids;
  for (auto const& a : rows) {
    ids.insert(a.activity_id);
    CHECK_FALSE(validate(a).has_value());
    CHECK(a.source_payload_digest == compute_payload_digest(a));
    if (a.activity_type != ActivityType::rideshare || a.status != ActivityStatus::completed) continue;
    ++checked;
    CHECK(a.rider_price_usd->value() - a.tips_usd->value() ==
          a.base_pay_usd->value() + a.platform_fees_usd->value());
  }
  CHECK(ids.size() == rows.size());
  CHECK(checked > 1500);
  CHECK(std::is_sorted(rows.begin(), rows.end(),
                       [](auto const& l, auto const& r) { return *l.start_time < *r.start_time; }));
}

TEST_CASE("era-switching fee model: flat before the cutover, variable after") {
  GeneratorParams p = with_rides(400);
  p.span_start = make_timestamp(2020, 1, 1);
  p.span_end = make_timestamp(2024, 12, 31);
  p.fee_model = FeeModel::era_switching(make_timestamp(2022, 1, 1));
  auto const rows = generate_history(p, 12, "ns", "drv");
  std::vector<double> after;
  int before = 0;
  for (auto const& a : rows) {
    if (a.activity_type != ActivityType::rideshare || a.status != ActivityStatus::completed) continue;
    double const rate =
        compute_take_rate(*a.platform_fees_usd, *a.rider_price_usd, *a.tips_usd).pct();
    if (*a.start_time < make_timestamp(2022, 1, 1)) {
      CHECK(rate == 25.0);
      ++before;
    } else {
      after.push_back(rate);
    }
  }
  CHECK(before > 50);
  REQUIRE(after.size() > 50);
  double mean = 0, var = 0;
  for (double r : after) mean += r;
  mean /= static_cast<double>(after.size());
  for (double r : after) var += (r - mean) * (r - mean);
  CHECK(std::sqrt(var / static_cast<double>(after.size())) > 4.0);
}

TEST_CASE("per-era take rates match the configured fee model") {
  GeneratorParams p = with_rides(4000);
  auto const rows = generate_history(p, 21, "ns", "drv");
  ZipSet const airport{p.airport_zip};
  auto const& fm = p.fee_model;
  for (std::size_t era = 0; era < fm.eras.size(); ++era) {
    auto const [from, to] = fm.era_bounds(era);
    double got = 0, want = 0;
    int n = 0;
    for (auto const& a : rows) {
      if (*a.start_time < from || *a.start_time >= to) continue;
      if (a.activity_type != ActivityType::rideshare || a.status != ActivityStatus::completed) continue;
      got += compute_take_rate(*a.platform_fees_usd, *a.rider_price_usd, *a.tips_usd).pct();
      double expected = fm.mean_at(*a.start_time);
      if (fm.eras[era].dispersion > 0) {
        if (a.surge_flag) expected += fm.surge_bump;
        if (classify_airport(a, airport)) expected += fm.airport_bump;
      }
      want += 100.0 * expected;
      ++n;
    }
    if (n < 500) continue;
    CHECK(std::fabs(got / n - want / n) < 1.0);
  }
}

TEST_CASE("generator params validation and JSON") {
  GeneratorParams p;
  p.surge_probability = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p = GeneratorParams{};
  p.span_end = p.span_start;
  CHECK_THROWS_AS(p.validate(), Error);
  p = GeneratorParams{};
  p.fee_model.eras = {FeeEra{make_timestamp(2023, 1, 1), 0.25, 0.25, 0.0}};
  CHECK_THROWS_AS(p.validate(), Error);
  auto const q = params_from_json({{"n_rides", 7}, {"era_cutover", "2021-06-01"}});
  CHECK(q.n_rides == 7);
  CHECK(q.fee_model.eras[1].from == make_timestamp(2021, 6, 1));
  auto const r = params_from_json(to_json(q));
  CHECK(to_json(r) == to_json(q));
  CHECK_THROWS_AS(params_from_json({{"n_rides", "many"}}), Error);
}

TEST_CASE("list_gigs pagination") {
  ProviderMock mock(quiet_options());
  auto const acct = mock.create_account("drv_1", with_rides(75), 1);
  auto const p1 = mock.list_gigs(acct.account_id, "", 50);
  CHECK(p1.data.size() == 50);
  REQUIRE_FALSE(p1.next_cursor.empty());
  auto const p2 = mock.list_gigs(acct.account_id, p1.next_cursor, 50);
  CHECK(p2.data.size() == 25);
  CHECK(p2.next_cursor.empty());
  auto const replay = mock.list_gigs(acct.account_id, p1.next_cursor, 50);
  CHECK(replay.data == p2.data);

  std::set<std::string> ids;
  for (auto const& a : full_scan(mock, acct.account_id, 7)) CHECK(ids.insert(a.activity_id).second);
  CHECK(ids.size() == 75);

  auto const empty = mock.create_account("drv_2", with_rides(0), 1);
  auto const e = mock.list_gigs(empty.account_id, "", 50);
  CHECK(e.data.empty());
  CHECK(e.next_cursor.empty());

  auto code_of = [&](auto&& fn) {
    try {
      fn();
    } catch (Error const& err) {
      return err.code();
    }
    return ErrorCode::unavailable;
  };
  CHECK(code_of([&] { mock.list_gigs("acct_nope", "", 10); }) == ErrorCode::not_found);
  CHECK(code_of([&] { mock.list_gigs(acct.account_id, "garbage", 10); }) == ErrorCode::bad_request);
  CHECK(code_of([&] { mock.list_gigs(empty.account_id, p1.next_cursor, 10); }) == ErrorCode::bad_request);
  CHECK(code_of([&] { mock.list_gigs(acct.account_id, "", 0); }) == ErrorCode::bad_request);
  CHECK(code_of([&] { mock.list_gigs(acct.account_id, "", 501); }) == ErrorCode::bad_request);
  CHECK(code_of([&] { mock.create_account("drv_1", with_rides(5), 9); }) == ErrorCode::conflict);
}

TEST_CASE("staged emission: K signed batches covering the history") {
  Captured got;
  ProviderMock mock(quiet_options());
  mock.register_webhook_endpoint(capture(got));
  auto const acct = mock.create_account("drv_1", with_rides(100), 5);
  REQUIRE(got.events.size() == 1);
  CHECK(got.events[0].event_type == EventType::account_connected);

  auto const report = mock.emit_events(acct.account_id, Schedule::staged);
  CHECK(report.events_emitted == 4);
  CHECK(report.delivered == 4);
  REQUIRE(got.events.size() == 5);
  std::set<std::string> ids, event_ids;
  Timestamp last{};
  for (std::size_t i = 0; i < got.events.size(); ++i) {
    CHECK(got.signatures[i] == crypto::hmac_sha256_hex("dev-webhook-secret", got.bodies[i]));
    CHECK(event_ids.insert(got.events[i].event_id).second);
    if (i == 0) continue;
    CHECK(got.events[i].event_type == EventType::gigs_added);
    for (auto const& a : got.events[i].payload) {
      ids.insert(a.activity_id);
      CHECK(*a.start_time >= last);
      last = *a.start_time;
    }
  }
  CHECK(ids.size() == 100);
  std::set<std::string> scanned;
  for (auto const& a : full_scan(mock, acct.account_id, 500)) scanned.insert(a.activity_id);
  CHECK(scanned == ids);
}

TEST_CASE("empty account emits only account.connected") {
  Captured got;
  ProviderMock mock(quiet_options());
  mock.register_webhook_endpoint(capture(got));
  auto const acct = mock.create_account("drv_0", with_rides(0), 5);
  auto const report = mock.emit_events(acct.account_id, Schedule::staged);
  CHECK(report.events_emitted == 0);
  REQUIRE(got.events.size() == 1);
  CHECK(got.events[0].event_type == EventType::account_connected);
}

TEST_CASE("flaky endpoint is retried with exponential backoff") {
  std::vector<std::chrono::milliseconds> sleeps;
  auto opts = quiet_options();
  opts.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };
  ProviderMock mock(opts);
  int calls = 0;
  std::vector<std::string> delivered;
  mock.register_webhook_endpoint([&](std::string const& body, std::string const&) {
    if (++calls <= 2) return 503;
    delivered.push_back(body);
    return 200;
  });
  auto const acct = mock.create_account("drv_1", with_rides(10), 5);
  CHECK(delivered.size() == 1);
  CHECK(sleeps == std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(50), std::chrono::milliseconds(100)});
  CHECK(mock.dead_letters().empty());

  // Now the endpoint is down for good: five attempts, then the dead-letter list.
  sleeps.clear();
  mock.register_webhook_endpoint([&](std::string const&, std::string const&) { return 0; });
  auto const report = mock.emit_events(acct.account_id, Schedule::staged);
  CHECK(report.dead_lettered == report.events_emitted);
  CHECK(report.attempts == 5 * report.events_emitted);
  auto const dead = mock.dead_letters();
  REQUIRE(dead.size() == static_cast<std::size_t>(report.events_emitted));
  CHECK(dead[0].attempts == 5);
  CHECK(sleeps.size() == 4 * dead.size());
  CHECK(sleeps[3] == std::chrono::milliseconds(400));
}

TEST_CASE("emitting without an endpoint is a contract violation") {
  ProviderMock mock(quiet_options());
  auto const acct = mock.create_account("drv_1", with_rides(3), 5);
  CHECK_THROWS_AS(mock.emit_events(acct.account_id, Schedule::staged), Error);
}

TEST_CASE("daily emission sends one event per simulated day") {
  Captured got;
  ProviderMock mock(quiet_options());
  mock.register_webhook_endpoint(capture(got));
  auto const acct = mock.create_account("drv_1", with_rides(20), 5);
  auto const day1 = mock.simulate_day(acct.account_id, 5);
  auto const day2 = mock.simulate_day(acct.account_id, 3);
  CHECK(mock.history_size(acct.account_id) == 28);
  got.events.clear();
  auto const r = mock.emit_events(acct.account_id, Schedule::daily);
  CHECK(r.events_emitted == 2);
  REQUIRE(got.events.size() == 2);
  CHECK(got.events[0].payload == day1);
  CHECK(got.events[1].payload == day2);
  CHECK(*day1.front().start_time > with_rides(1).span_end);
  got.events.clear();
  CHECK(mock.emit_events(acct.account_id, Schedule::daily).events_emitted == 0);
  mock.simulate_day(acct.account_id, 0);
  CHECK(mock.emit_events(acct.account_id, Schedule::daily).events_emitted == 1);
  CHECK(got.events.back().payload.empty());
}

TEST_CASE("tip edits emit gigs.updated and keep the identity") {
  Captured got;
  ProviderMock mock(quiet_options());
  mock.register_webhook_endpoint(capture(got));
  auto const acct = mock.create_account("drv_1", with_rides(30), 5);
  auto const first = mock.list_gigs(acct.account_id, "", 1).data.front();
  auto const updated = mock.update_gig_tips(acct.account_id, first.activity_id, Cents(777));
  CHECK(updated.tips_usd == Cents(777));
  CHECK(updated.rider_price_usd->value() - 777 ==
        first.rider_price_usd->value() - first.tips_usd->value());
  CHECK(updated.source_payload_digest != first.source_payload_digest);
  REQUIRE(got.events.back().event_type == EventType::gigs_updated);
  CHECK(got.events.back().payload.size() == 1);
  CHECK(mock.list_gigs(acct.account_id, "", 1).data.front() == updated);
}

TEST_CASE("removed accounts stay silent") {
  Captured got;
  ProviderMock mock(quiet_options());
  mock.register_webhook_endpoint(capture(got));
  auto const acct = mock.create_account("drv_1", with_rides(30), 5);
  mock.remove_account(acct.account_id);
  CHECK(got.events.back().event_type == EventType::account_removed);
  auto const n = got.events.size();
  CHECK(mock.emit_events(acct.account_id, Schedule::staged).events_emitted == 0);
  CHECK(got.events.size() == n);
  CHECK_FALSE(mock.find_account(acct.account_id).has_value());
}

TEST_CASE("state save and load regenerates identical histories") {
  ProviderMock mock(quiet_options());
  auto const acct = mock.create_account("drv_1", with_rides(50), 5);
  mock.simulate_day(acct.account_id, 4);
  auto const gig = mock.list_gigs(acct.account_id, "", 1).data.front();
  mock.update_gig_tips(acct.account_id, gig.activity_id, Cents(123));
  auto const state = mock.save_state();

  ProviderMock restored(quiet_options());
  restored.load_state(json::parse(state.dump()));
  CHECK(restored.history_digest(acct.account_id) == mock.history_digest(acct.account_id));
  CHECK(restored.find_by_driver_ref("drv_1")->account_id == acct.account_id);
}

TEST_CASE("webhook event JSON diagnostics") {
  WebhookEvent e;
  e.event_id = "evt_1";
  e.account_id = "acct_1";
  e.payload = generate_history(with_rides(2), 1, "ns", "drv");
  auto const back = event_from_json(to_json(e));
  CHECK(back.payload == e.payload);
  auto bad = to_json(e);
  bad["payload"][1]["tips_usd"] = "free";
  try {
    event_from_json(bad);
    FAIL("expected bad_request");
  } catch (Error const& err) {
    CHECK(err.code() == ErrorCode::bad_request);
    CHECK(std::string(err.what()).find("payload[1]") != std::string::npos);
  }
  bad = to_json(e);
  bad["event_type"] = "gigs.exploded";
  CHECK_THROWS_AS(event_from_json(bad), Error);
}

TEST_CASE("provider HTTP surface and client over a real socket") {
  ProviderMock mock(quiet_options());
  http::Router router;
  add_provider_routes(router, mock);
  http::Server server(router);
  int const port = server.bind("127.0.0.1", 0);
  std::thread serving([&] { server.listen_after_bind(); });
  std::string const base = "http://127.0.0.1:" + std::to_string(port);

  HttpProviderClient client(base);
  auto const acct = client.create_account("drv_h", {{"n_rides", 120}}, 9);
  CHECK(client.get_account(acct.account_id)->driver_ref == "drv_h");
  CHECK_FALSE(client.get_account("acct_missing").has_value());
  std::size_t total = 0;
  std::string cursor;
  do {
    auto page = client.list_gigs(acct.account_id, cursor, 50);
    total += page.data.size();
    cursor = page.next_cursor;
  } while (!cursor.empty());
  CHECK(total == 120);
  try {
    client.create_account("drv_h", json::object(), 9);
    FAIL("expected conflict");
  } catch (Error const& e) {
    CHECK(e.code() == ErrorCode::conflict);
  }
  try {
    client.list_gigs(acct.account_id, "c1-zz", 10);
    FAIL("expected bad_request");
  } catch (Error const& e) {
    CHECK(e.code() == ErrorCode::bad_request);
  }
  CHECK(http::post(base + "/provider/accounts/" + acct.account_id + "/emit", R"({"schedule":"hourly"})").status == 400);
  client.remove_account(acct.account_id);
  CHECK_FALSE(client.get_account(acct.account_id).has_value());

  server.stop();
  serving.join();

  HttpProviderClient dead("http://127.0.0.1:1");
  try {
    dead.get_account("x");
    FAIL("expected unavailable");
  } catch (Error const& e) {
    CHECK(e.code() == ErrorCode::unavailable);
  }
}

TEST_CASE("router basics") {
  http::Router r;
  r.add("GET", "/things/:id", [](http::Request const& req) {
    if (req.param("id") == "boom") throw Error(ErrorCode::locked, "nope");
    return http::Response::json(200, {{"id", req.param("id")}});
  });
  http::Request req;
  req.method = "GET";
  req.path = "/things/42";
  auto const ok = r.dispatch(req);
  CHECK(ok.status == 200);
  CHECK(json::parse(ok.body)["id"] == "42");
  req.path = "/things/boom";
  auto const locked = r.dispatch(req);
  CHECK(locked.status == 423);
  CHECK(json::parse(locked.body)["error"]["code"] == "locked");
  req.path = "/nothing";
  CHECK(r.dispatch(req).status == 404);
  req.path = "/things/1";
  req.method = "POST";
  CHECK(r.dispatch(req).status == 405);
}
