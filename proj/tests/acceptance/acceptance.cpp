// Acceptance suite: one PASS/FAIL line per primary criterion, then a
// nonzero exit if any failed. Oracles live in tests/support and never call
// the code under test for the quantity they check.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/ingest/ingestor.hpp"
#include "fairfare/pipeline/analytics.hpp"
#include "fairfare/pipeline/cleaning.hpp"
#include "fairfare/pipeline/pipeline.hpp"
#include "fairfare/pipeline/stats.hpp"
#include "fairfare/provider/client.hpp"
#include "fairfare/provider/generator.hpp"
#include "fairfare/provider/provider_mock.hpp"
#include "fairfare/store/datastore.hpp"
#include "fairfare/take_rate.hpp"
#include "support/auth_matrix.hpp"
#include "support/fixtures.hpp"
#include "support/platform_rig.hpp"
#include "support/process.hpp"

#ifndef FAIRFARE_CLI
#error "FAIRFARE_CLI must name the cli binary"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fairfare;

namespace {

// Collects failure reasons for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;

  bool expect(bool ok, std::string const& what) {
    if (!ok) failures.push_back(what);
    return ok;
  }
  void note(std::string s) { notes.push_back(std::move(s)); }
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<void(Check&)> body;
};

std::string fmt(double v, int decimals = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// -- 1 ----------------------------------------------------------------------

void formula_fidelity(Check& c) {
  // Table 1 column means: fee 7.44, customer charge 24.71, tips excluded.
  auto const r = compute_take_rate(7.44, 24.71, 0.0);
  double const pct = r.pct();
  double const oracle = 7.44 / 24.71 * 100.0;
  c.expect(std::fabs(pct - oracle) < 1e-9, "formula differs from fees/(price-tips)");
  c.expect(round_to(pct, 2) == 30.11, "rounded value is " + fmt(round_to(pct, 2), 2));
  c.expect(std::fabs(pct - 30.0) <= 0.2, "more than 0.2 pp from the reported 30%");
  auto const cents = compute_take_rate(Cents(744), Cents(2471), Cents(0));
  c.expect(std::fabs(cents.pct() - pct) < 1e-9, "integer-cents path disagrees");
  c.note("take rate " + fmt(pct, 2) + "%");
}

// -- 2 ----------------------------------------------------------------------

void cleaning_partition(Check& c) {
  using pipeline::ExclusionReason;
  auto const rows = fixtures::defect_fixture();
  auto const r = pipeline::clean(rows).report;
  c.expect(r.input_count == 100, "fixture is not 100 rows");
  c.expect(r.retained_count == 72, "retained " + std::to_string(r.retained_count));
  c.expect(r.count(ExclusionReason::negative_take_rate) == 12, "negative_take_rate != 12");
  c.expect(r.count(ExclusionReason::non_rideshare) == 8, "non_rideshare != 8");
  c.expect(r.count(ExclusionReason::cancelled) == 5, "cancelled != 5");
  c.expect(r.count(ExclusionReason::missing_fields) == 3, "missing_fields != 3");

  std::mt19937_64 rng(4242);
  int bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int const n = static_cast<int>(rng() % 60);
    std::vector<RideActivity> input;
    for (int i = 0; i < n; ++i) input.push_back(fixtures::random_ride(rng, i));
    auto const res = pipeline::clean(input);
    // Independent tally: every input row must land in exactly one bucket.
    std::size_t reasons = 0;
    for (auto const e : res.report.excluded) reasons += e;
    if (res.report.input_count != input.size() ||
        input.size() != res.report.retained_count + reasons ||
        res.retained.size() != res.report.retained_count) {
      ++bad;
    }
  }
  c.expect(bad == 0, std::to_string(bad) + " of 1000 property cases broke the partition");
  c.note("72/{12,8,5,3}; 1000 property cases");
}

// -- 3 ----------------------------------------------------------------------

void aggregation_oracle(Check& c) {
  std::mt19937_64 rng(7070);
  ZipSet const airport{"80249"};
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RideActivity> rows;
    int const n = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) rows.push_back(fixtures::random_ride(rng, i));
    auto const kept = pipeline::clean(rows).retained;
    auto const groups = pipeline::standard_groups(airport);
    auto const table = pipeline::summarize(kept, groups);
    for (auto const& g : groups) {
      std::vector<RideActivity> members;
      for (auto const& r : kept) {
        if (g.member(r)) members.push_back(r.activity);
      }
      auto const row = std::find_if(table.rows.begin(), table.rows.end(),
                                    [&](auto const& s) { return s.group == g.label; });
      if (members.empty()) {
        c.expect(row == table.rows.end(), "empty group reported");
        continue;
      }
      if (!c.expect(row != table.rows.end(), "group missing: " + g.label)) continue;
      auto const o = fixtures::oracle_summary(members);
      std::string const where = "trial " + std::to_string(trial) + " " + g.label + ": ";
      c.expect(row->n_rides == o.n_rides && row->n_drivers == o.n_drivers, where + "counts");
      c.expect(std::fabs(row->mean_rider_price_usd - o.price) < 0.005 &&
                   std::fabs(row->mean_fees_usd - o.fees) < 0.005 &&
                   std::fabs(row->mean_base_pay_usd - o.base) < 0.005 &&
                   std::fabs(row->mean_tips_usd - o.tips) < 0.005,
               where + "money means beyond a cent");
      c.expect(std::fabs(row->take_rate_mean_of_ratios - o.mean_of_ratios) < 0.01 &&
                   std::fabs(row->take_rate_ratio_of_means - o.ratio_of_means) < 0.01,
               where + "take rate beyond 0.01 pp");
      ++compared;
    }
  }
  c.note("200 snapshots, " + std::to_string(compared) + " groups compared");
}

// -- 4 ----------------------------------------------------------------------

void statistical_calibration(Check& c) {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed * 7919);
    std::size_t const na = 3 + rng() % 13, nb = 3 + rng() % 13;
    double const shift = static_cast<double>(rng() % 5) * 0.5;
    std::vector<double> a(na), b(nb);
    // A half-point grid, as take rates fall into mode bins, so ties occur.
    for (auto& v : a) v = 25.0 + 0.5 * static_cast<double>(rng() % 16);
    for (auto& v : b) v = 25.0 + 0.5 * static_cast<double>(rng() % 16) + shift;
    double const p = pipeline::mann_whitney_u(a, b).p_value;
    double const oracle = fixtures::permutation_p(a, b, seed);
    worst = std::max(worst, std::fabs(p - oracle));
  }
  c.expect(worst <= 0.005, "max |p - permutation p| = " + fmt(worst));

  int rejections = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(30.0, 8.0);
    std::vector<double> a(40), b(40);
    for (auto& v : a) v = d(rng);
    for (auto& v : b) v = d(rng);
    if (pipeline::mann_whitney_u(a, b).p_value < 0.05) ++rejections;
  }
  double const rate = rejections / 100.0;
  c.expect(std::fabs(rate - 0.05) <= 0.05, "null rejection rate " + fmt(rate, 2));
  c.note("max |dp| " + fmt(worst) + ", null rejection " + fmt(rate, 2));
}

// -- 5 ----------------------------------------------------------------------

void qualitative_shape(Check& c) {
  provider::GeneratorParams params;
  params.n_rides = 1000;
  params.span_start = make_timestamp(2019, 1, 1);
  params.span_end = make_timestamp(2024, 12, 31);
  pipeline::Snapshot snap;
  for (int i = 0; i < 5; ++i) {
    auto const driver = "drv_shape_" + std::to_string(i);
    auto rides = provider::generate_history(params, 500 + static_cast<std::uint64_t>(i),
                                            "shape" + std::to_string(i), driver);
    for (auto& r : rides) {
      r.driver_id = driver;
      snap.activities.push_back(std::move(r));
    }
    snap.driver_affiliations[driver] = {};
  }
  auto const bundle = pipeline::compute_bundle(snap, {}, {});
  c.expect(bundle.cleaning.input_count == 5000, "expected 5000 generated rides");

  auto const peak = std::max_element(bundle.weekly.begin(), bundle.weekly.end(),
                                     [](auto const& a, auto const& b) {
                                       return a.mean_take_rate_pct < b.mean_take_rate_pct;
                                     });
  if (c.expect(peak != bundle.weekly.end(), "no weekly series")) {
    auto const [from, to] = params.fee_model.era_bounds(1);
    c.expect(from == make_timestamp(2021, 1, 1) && to == make_timestamp(2023, 1, 1),
             "default high-fee era is not 2021-2022");
    auto const week_start = iso_week_start(peak->week);
    c.expect(week_start + std::chrono::days(7) > from && week_start < to,
             "weekly peak " + peak->week.to_string() + " outside the high-fee era [" +
                 format_date(from) + ", " + format_date(to) + ")");
    c.note("peak " + peak->week.to_string() + " at " + fmt(peak->mean_take_rate_pct, 1) + "%");
  }
  for (auto const* cmp : {&bundle.surge, &bundle.airport}) {
    if (!c.expect(!cmp->degenerate(), cmp->label_a + " comparison is degenerate")) continue;
    c.expect(cmp->significant_at_05, cmp->label_a + " not significant, p=" + fmt(*cmp->p_value));
    c.expect(*cmp->mean_a > *cmp->mean_b, cmp->label_a + " mean not higher");
    // Cross-check the flag against the raw p-value.
    c.expect(cmp->significant_at_05 == (*cmp->p_value < 0.05), "flag disagrees with p");
    c.note(cmp->label_a + " " + fmt(*cmp->mean_a, 2) + " vs " + fmt(*cmp->mean_b, 2) +
           " p=" + fmt(*cmp->p_value, 6));
  }
}

// -- 6 ----------------------------------------------------------------------

void end_to_end(Check& c) {
  auto const dir = fs::temp_directory_path() / ("ff_accept_e2e_" + std::to_string(getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto const data = (dir / "data").string();
  auto const sms = (dir / "sms.jsonl").string();
  std::map<std::string, std::string> const env{{"DATA_DIR", data},
                                               {"ADMIN_KEY", "acceptance-admin"},
                                               {"PROVIDER_WEBHOOK_SECRET", "acceptance-secret"},
                                               {"SMS_TRANSCRIPT", sms}};
  auto cli = [&](std::vector<std::string> args) {
    return fixtures::run_cli(FAIRFARE_CLI, std::move(args), env);
  };

  // seed
  auto const seeded = cli({"seed", "--drivers", "3", "--rides", "60", "--seed", "11", "--json"});
  if (!c.expect(seeded.exit_code == 0, "seed exited " + std::to_string(seeded.exit_code))) return;
  auto const seed_doc = json::parse(seeded.out);
  auto const again = cli({"seed", "--drivers", "3", "--rides", "60", "--seed", "11", "--json"});
  c.expect(again.exit_code == 0 && json::parse(again.out)["state_digest"] == seed_doc["state_digest"],
           "re-seeding changed the state digest");

  // serve
  auto server = fixtures::spawn({FAIRFARE_CLI, "serve", "--port", "0"}, env);
  auto const ready = fixtures::read_line(server.out_fd, std::chrono::seconds(20));
  if (!c.expect(ready.has_value(), "no readiness line")) {
    kill(server.pid, SIGKILL);
    waitpid(server.pid, nullptr, 0);
    return;
  }
  auto const url_at = ready->find("http://");
  std::string const base = ready->substr(url_at, ready->find(' ', url_at) - url_at);
  http::Headers const admin{{"Authorization", "Bearer acceptance-admin"}};

  // link: one enrolled driver per seeded account
  std::vector<std::pair<std::string, std::string>> drivers;  // id, phone
  int i = 0;
  for (auto const& acct : seed_doc["accounts"]) {
    std::string const phone = "+1303555010" + std::to_string(i++);
    auto const enrolled = http::post(
        base + "/drivers",
        json{{"display_name", "Driver"},
             {"phone", phone},
             {"affiliation_name", i % 2 ? "Union A" : "Union B"},
             {"consent", {{"consented", true}, {"consent_version", "v1"}}}}
            .dump());
    if (!c.expect(enrolled.status == 201, "enroll failed: " + enrolled.body)) continue;
    auto const e = json::parse(enrolled.body);
    std::string const id = e["driver_id"];
    auto const linked = http::post(base + "/drivers/" + id + "/link",
                                   json{{"account_id", acct["account_id"]}}.dump(),
                                   {{"Authorization", "Bearer " + e["token"].get<std::string>()}});
    c.expect(linked.status == 202, "link failed: " + linked.body);
    drivers.emplace_back(id, phone);
  }
  auto const deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
  for (auto const& [id, phone] : drivers) {
    std::string phase;
    while (std::chrono::steady_clock::now() < deadline) {
      auto const s = http::get(base + "/drivers/" + id + "/status", admin);
      if (s.status == 200) phase = json::parse(s.body)["phase"];
      if (phase == "synced") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    c.expect(phase == "synced", id + " never reached synced");
  }

  // sync
  auto const synced = cli({"sync", "--server", base, "--simulate-days", "2", "--json"});
  if (c.expect(synced.exit_code == 0, "sync exited " + std::to_string(synced.exit_code))) {
    auto const deltas = json::parse(synced.out)["deltas"];
    c.expect(deltas.size() == drivers.size(), "sync reported the wrong number of drivers");
    for (auto const& d : deltas) {
      c.expect(d["ok"] == true && d["rows_changed"] == 16 && d["activities"] == 76,
               "unexpected sync delta " + d.dump());
    }
  }

  // survey: exactly one invite per driver, answered through the link
  std::map<std::string, std::vector<std::string>> invites;
  {
    std::ifstream in(sms);
    std::string line;
    while (std::getline(in, line)) {
      auto const j = json::parse(line);
      auto const body = j["body"].get<std::string>();
      invites[j["phone"]].push_back(body.substr(body.rfind("/survey/") + 8));
    }
  }
  for (auto const& [id, phone] : drivers) {
    auto const it = invites.find(phone);
    std::size_t const n = it == invites.end() ? 0 : it->second.size();
    if (!c.expect(n == 1, phone + " got " + std::to_string(n) + " invites")) continue;
    auto const submitted = http::post(base + "/survey/" + it->second.front(),
                                      fixtures::survey_answers(50, 20).dump());
    c.expect(submitted.status == 201, "survey submit failed: " + submitted.body);
  }
  c.expect(invites.size() == drivers.size(), "invites went to unknown phones");

  kill(server.pid, SIGINT);
  int status = 0;
  waitpid(server.pid, &status, 0);
  close(server.out_fd);
  c.expect(WIFEXITED(status) && WEXITSTATUS(status) == 0, "serve did not shut down cleanly");

  // pipeline run, twice
  auto const first = cli({"pipeline", "run", "--json"});
  auto const second = cli({"pipeline", "run", "--json"});
  if (!c.expect(first.exit_code == 0 && second.exit_code == 0, "pipeline run failed")) return;
  auto const p1 = json::parse(first.out), p2 = json::parse(second.out);
  c.expect(p1["cache_hit"] == false, "first run was already cached");
  c.expect(p2["cache_hit"] == true, "rerun was not a cache hit");
  c.expect(p1["digest"] == p2["digest"], "rerun digest differs");
  c.expect(p1["rides"].get<int>() > 0, "pipeline saw no rides");

  // report build
  auto const built = cli({"report", "build", "--bundle", p1["bundle"], "--json"});
  if (!c.expect(built.exit_code == 0, "report build failed")) return;
  auto const rep = json::parse(built.out);
  std::ifstream in(fs::path(rep["path"].get<std::string>()) / "report.json");
  auto const doc = json::parse(in);
  std::vector<std::string> keys;
  for (auto const& s : doc["sections"]) keys.push_back(s["key"]);
  c.expect(keys == std::vector<std::string>{"summary", "weekly", "perception", "airport", "surge",
                                            "rate_per_mile"},
           "report sections are not the six expected");
  for (auto const& s : doc["sections"]) {
    if (s["key"] == "perception") {
      c.expect(s["insufficient_data"] == false, "perception section lacks the survey answers");
    }
  }
  for (auto const* f : {"report.html", "report.txt", "manifest.json", "csv/summary.csv"}) {
    c.expect(fs::exists(fs::path(rep["path"].get<std::string>()) / f), std::string("missing ") + f);
  }
  c.note(std::to_string(drivers.size()) + " drivers, digest " +
         p1["digest"].get<std::string>().substr(0, 12));
  fs::remove_all(dir);
}

// -- 7 ----------------------------------------------------------------------

// Webhook-only ingestion into a store whose ids come from a counter.
struct ReplayRig {
  std::uint64_t next_id = 0;
  store::Datastore db;
  std::unique_ptr<provider::ProviderMock> mock;
  std::unique_ptr<provider::InProcessProviderClient> client;
  std::unique_ptr<ingest::Ingestor> ingestor;

  static store::Datastore::Options options(std::uint64_t* counter) {
    store::Datastore::Options o;
    o.clock = [] { return make_timestamp(2024, 9, 1); };
    o.id_hex = [counter](std::size_t bytes) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(++*counter));
      return std::string(buf).substr(16 - std::min<std::size_t>(16, bytes * 2));
    };
    return o;
  }

  ReplayRig() : db(options(&next_id)) {
    provider::ProviderMock::Options mo;
    mo.webhook_secret = "replay-secret";
    mo.clock = [] { return make_timestamp(2024, 9, 1); };
    mo.sleep = [](std::chrono::milliseconds) {};
    mock = std::make_unique<provider::ProviderMock>(mo);
    client = std::make_unique<provider::InProcessProviderClient>(*mock);
    ingestor = std::make_unique<ingest::Ingestor>(
        db, *client, ingest::Ingestor::Options{"replay-secret", 10, 100},
        [](std::string const&) { return true; });
  }
};

void security_suite(Check& c) {
  auto const matrix = fixtures::run_auth_matrix();
  for (auto const& m : matrix.mismatches) c.expect(false, "auth matrix: " + m);

  {
    fixtures::PlatformRig rig;
    auto const a = rig.enroll("+13035550177");
    auto const b = rig.enroll("+13035550178");
    rig.link(a, 30, 1);
    rig.link(b, 30, 2);
    rig.call("POST", "/survey/" + rig.survey_token("+13035550177"), fixtures::survey_answers(50, 20));
    auto const acct = rig.platform->store().get_sync_state(a.driver_id)->account_id;
    auto const del = rig.call("POST", "/me/delete", nullptr, a.token);
    c.expect(del.status == 200, "self deletion failed");
    auto const& store = rig.platform->store();
    c.expect(store.scan_for_value(a.driver_id) == std::map<std::string, int>{{"main.tombstones", 1}},
             "driver id survives outside the tombstone");
    for (auto const& v : {std::string("+13035550177"), acct, a.token}) {
      c.expect(store.scan_for_value(v).empty(), "value survives deletion: " + v);
    }
  }

  // Clean run: three drivers, everything delivered once and in order.
  std::vector<std::pair<std::string, std::string>> log;  // body, signature
  std::vector<std::string> log_account;
  auto setup = [](ReplayRig& rig) {
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) {
      auto const d = rig.db.create_driver("R", "+1303555020" + std::to_string(i), {},
                                          {true, "v1", make_timestamp(2024, 1, 1)});
      provider::GeneratorParams p;
      p.n_rides = 30 + 10 * i;
      auto const acct = rig.mock->create_account("replay-" + std::to_string(i), p,
                                                 900 + static_cast<std::uint64_t>(i));
      rig.ingestor->bind_driver(d.driver_id, acct.account_id);
      ids.push_back(acct.account_id);
    }
    return ids;
  };
  ReplayRig clean;
  clean.mock->register_webhook_endpoint([&](std::string const& body, std::string const& sig) {
    log.emplace_back(body, sig);
    log_account.push_back(json::parse(body)["account_id"]);
    return clean.ingestor->handle_webhook(body, sig).status;
  });
  auto const accounts = setup(clean);
  for (auto const& acct : accounts) {
    clean.mock->emit_events(acct, provider::Schedule::staged);
    clean.mock->simulate_day(acct, 4);
    clean.mock->emit_events(acct, provider::Schedule::daily);
    auto const gigs = clean.mock->list_gigs(acct, "", 3).data;
    clean.mock->update_gig_tips(acct, gigs[1].activity_id, Cents(450));
  }
  auto const clean_digest = clean.db.state_digest();

  // Replay: every event twice, drivers interleaved at random, each
  // driver's own order kept.
  ReplayRig replay;
  setup(replay);
  std::map<std::string, std::vector<std::size_t>> per_account;
  for (std::size_t k = 0; k < log.size(); ++k) per_account[log_account[k]].push_back(k);
  std::vector<std::size_t> order;
  std::mt19937_64 rng(31337);
  std::map<std::string, std::size_t> cursor;
  std::size_t remaining = log.size() * 2;
  while (remaining > 0) {
    std::vector<std::string> open;
    for (auto const& [acct, events] : per_account) {
      if (cursor[acct] < events.size() * 2) open.push_back(acct);
    }
    auto const& acct = open[rng() % open.size()];
    order.push_back(per_account[acct][cursor[acct] / 2]);
    ++cursor[acct];
    --remaining;
  }
  int non_200 = 0;
  for (auto const k : order) {
    if (replay.ingestor->handle_webhook(log[k].first, log[k].second).status != 200) ++non_200;
  }
  c.expect(non_200 == 0, std::to_string(non_200) + " replayed events were refused");
  c.expect(replay.db.state_digest() == clean_digest, "replayed state digest differs");
  c.note(std::to_string(matrix.cells) + " matrix cells; " + std::to_string(order.size()) +
         " replayed deliveries");
}

}  // namespace

int main() {
  std::vector<Criterion> const criteria{
      {"formula fidelity", 1, formula_fidelity},
      {"cleaning partition", 5, cleaning_partition},
      {"aggregation oracle", 10, aggregation_oracle},
      {"statistical calibration", 60, statistical_calibration},
      {"qualitative shape", 60, qualitative_shape},
      {"end-to-end cli", 120, end_to_end},
      {"security suite", 120, security_suite},
  };
  int failed = 0;
  for (auto const& cr : criteria) {
    Check c;
    auto const t0 = std::chrono::steady_clock::now();
    try {
      cr.body(c);
    } catch (std::exception const& e) {
      c.failures.push_back(std::string("threw: ") + e.what());
    }
    double const secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > cr.budget_s) {
      c.failures.push_back("took " + fmt(secs, 1) + " s, budget " + fmt(cr.budget_s, 0) + " s");
    }
    bool const ok = c.failures.empty();
    failed += !ok;
    std::string detail;
    for (auto const& n : c.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << cr.name << "  (" << fmt(secs, 2) << " s)";
    if (!detail.empty()) std::cout << "  " << detail;
    std::cout << "\n";
    for (auto const& f : c.failures) std::cout << "      - " << f << "\n";
    std::cout.flush();
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed\n"
                       : std::string("acceptance: all criteria passed\n"));
  return failed ? 1 : 0;
}
