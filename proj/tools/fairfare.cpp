// Operator entry point: seed the provider mock, serve the API, trigger
// syncs, run the pipeline and build reports.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "fairfare/api/platform.hpp"
#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"
#include "fairfare/http.hpp"
#include "fairfare/pipeline/pipeline.hpp"
#include "fairfare/provider/provider_mock.hpp"
#include "fairfare/report/report.hpp"
#include "fairfare/store/datastore.hpp"
#include "fairfare/timeutil.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fairfare;

namespace {

enum Exit { ok = 0, usage = 2, contract = 3, unavailable = 4 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::bad_request:
      return usage;
    case ErrorCode::unavailable:
      return unavailable;
    default:
      return contract;
  }
}

// KEY=VALUE per line; '#' starts a comment.
std::map<std::string, std::string> read_config_file(fs::path const& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::bad_request, "cannot read config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int n = 0;
  auto trim = [](std::string s) {
    auto const b = s.find_first_not_of(" \t\r");
    auto const e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto const eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::bad_request,
                  path.string() + ":" + std::to_string(n) + ": expected KEY=VALUE");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

struct Globals {
  std::string config_file;
  std::string data_dir;
  bool json_out = false;

  std::map<std::string, std::string> settings() const {
    auto s = config_file.empty() ? std::map<std::string, std::string>{}
                                 : read_config_file(config_file);
    if (!data_dir.empty()) s["DATA_DIR"] = data_dir;
    return s;
  }

  std::optional<std::string> setting(std::string const& key) const {
    auto const s = settings();
    if (auto it = s.find(key); it != s.end() && !it->second.empty()) return it->second;
    if (char const* v = std::getenv(key.c_str()); v && *v) return std::string(v);
    return std::nullopt;
  }

  fs::path resolved_data_dir() const {
    return setting("DATA_DIR").value_or("fairfare-data");
  }
};

void write_atomically(fs::path const& path, std::string const& content) {
  auto const tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out << content;
    if (!out) throw Error(ErrorCode::unavailable, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

// -- seed -------------------------------------------------------------------

struct SeedArgs {
  int drivers = 5;
  int rides = 200;
  std::uint64_t seed = 1;
  std::optional<double> surge_prob;
  std::optional<double> airport_prob;
  std::string era_cutover;
};

int cmd_seed(Globals const& g, SeedArgs const& a) {
  provider::GeneratorParams params;
  params.n_rides = a.rides;
  if (a.surge_prob) params.surge_probability = *a.surge_prob;
  if (a.airport_prob) params.airport_probability = *a.airport_prob;
  if (!a.era_cutover.empty()) {
    params.fee_model = provider::FeeModel::era_switching(parse_timestamp(a.era_cutover));
  }
  params.validate();

  auto const dir = g.resolved_data_dir();
  fs::create_directories(dir);
  auto const state_path = dir / "provider.json";

  // Pinning the clock to the end of the history makes connected_at, and so
  // the saved state, a function of the arguments alone.
  provider::ProviderMock::Options mo;
  mo.clock = [end = params.span_end] { return end; };
  provider::ProviderMock mock(mo);
  if (fs::exists(state_path)) {
    std::ifstream in(state_path);
    mock.load_state(json::parse(in));
  }

  json const wanted_params = provider::to_json(params);
  json accounts = json::array();
  int created = 0;
  for (int i = 1; i <= a.drivers; ++i) {
    char ref[32];
    std::snprintf(ref, sizeof ref, "seed-%03d", i);
    std::uint64_t const seed = a.seed * 1000 + static_cast<std::uint64_t>(i);
    provider::ProviderAccount acct;
    if (auto existing = mock.find_by_driver_ref(ref)) {
      // Re-running with the same arguments is a no-op; different ones
      // would silently rewrite a history the platform may have ingested.
      json const state = mock.save_state();
      auto const it = std::find_if(state["accounts"].begin(), state["accounts"].end(),
                                   [&](json const& e) {
                                     return e["account"]["driver_ref"] == ref;
                                   });
      if (existing->generator_seed != seed || (*it)["params"] != wanted_params) {
        throw Error(ErrorCode::conflict, std::string(ref) +
                                             " already seeded with different arguments in " +
                                             state_path.string());
      }
      acct = *existing;
    } else {
      acct = mock.create_account(ref, params, seed);
      ++created;
    }
    accounts.push_back({{"account_id", acct.account_id},
                        {"driver_ref", acct.driver_ref},
                        {"rides", mock.history_size(acct.account_id)},
                        {"history_digest", mock.history_digest(acct.account_id)}});
  }

  auto const dump = mock.save_state().dump(1) + "\n";
  write_atomically(state_path, dump);
  auto const digest = crypto::sha256_hex(dump);

  if (g.json_out) {
    std::cout << json{{"accounts", accounts},
                      {"created", created},
                      {"state_digest", digest},
                      {"state_path", state_path.string()}}
                     .dump()
              << "\n";
  } else {
    for (auto const& acc : accounts) {
      std::cout << acc["account_id"].get<std::string>() << "  "
                << acc["driver_ref"].get<std::string>() << "  " << acc["rides"] << " rides\n";
    }
    std::cout << "state digest " << digest << "\n"
              << "wrote " << state_path.string() << "\n";
  }
  return ok;
}

// -- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
};

int cmd_serve(Globals const& g, ServeArgs const& a) {
  auto settings = g.settings();
  settings["DATA_DIR"] = g.resolved_data_dir().string();
  auto config = api::PlatformConfig::from_env(settings);
  if (config.admin_key.empty()) {
    config.admin_key = "adm_" + crypto::random_hex(16);
    std::cerr << "ADMIN_KEY not set; generated admin key " << config.admin_key << "\n";
  }
  if (config.webhook_secret.empty()) config.webhook_secret = crypto::random_hex(16);
  if (!g.setting("BASE_URL") && a.port != 0) {
    config.base_url = "http://" + a.host + ":" + std::to_string(a.port);
  }

  // Signals are taken by a dedicated thread so shutdown runs outside
  // signal context.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  api::Platform platform(config);
  http::Server server(platform.router());
  int const port = server.bind(a.host, a.port);
  if (port <= 0) {
    std::cerr << "fairfare: cannot listen on " << a.host << ":" << a.port << "\n";
    return unavailable;
  }

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });

  std::cout << "fairfare ready on http://" << a.host << ":" << port << " data_dir "
            << config.data_dir.string() << std::endl;
  server.listen_after_bind();

  platform.wait_idle();
  platform.save_provider_state();
  // The waiter is still blocked if the server stopped on its own.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::cout << "fairfare stopped" << std::endl;
  return ok;
}

// -- sync -------------------------------------------------------------------

struct SyncArgs {
  std::string server;
  std::string driver;
  int simulate_days = 0;
  int rides_per_day = 8;
};

int cmd_sync(Globals const& g, SyncArgs const& a) {
  auto const server = !a.server.empty() ? a.server
                                        : g.setting("FAIRFARE_URL").value_or("http://127.0.0.1:8080");
  auto const key = g.setting("ADMIN_KEY");
  if (!key || key->empty()) throw Error(ErrorCode::bad_request, "ADMIN_KEY is required for sync");
  json body = json::object();
  if (!a.driver.empty()) body["driver_id"] = a.driver;
  if (a.simulate_days > 0) {
    body["simulate_days"] = a.simulate_days;
    body["rides_per_day"] = a.rides_per_day;
  }
  auto const res = http::post(server + "/admin/sync", body.dump(),
                              {{"Authorization", "Bearer " + *key},
                               {"Content-Type", "application/json"}});
  if (res.status == 0) {
    std::cerr << "fairfare: no service at " << server << "\n";
    return unavailable;
  }
  if (res.status != 200) {
    std::cerr << "fairfare: sync failed (" << res.status << "): " << res.body << "\n";
    if (res.status >= 500) return unavailable;
    return res.status == 400 ? usage : contract;
  }
  auto const j = json::parse(res.body);
  if (g.json_out) {
    std::cout << j.dump() << "\n";
    return ok;
  }
  bool all_ok = true;
  for (auto const& d : j["deltas"]) {
    std::cout << d["driver_id"].get<std::string>() << "  " << d["phase"].get<std::string>()
              << "  +" << d["rows_changed"] << " changed  " << d["activities"] << " total";
    if (!d["ok"].get<bool>()) {
      all_ok = false;
      std::cout << "  error: " << d.value("error", std::string{});
    }
    std::cout << "\n";
  }
  // Failed drivers stay retryable; the command itself still did its job.
  if (!all_ok) std::cerr << "fairfare: some drivers failed and will be retried\n";
  return ok;
}

// -- pipeline run -----------------------------------------------------------

struct PipelineArgs {
  std::string from;
  std::string to;
  std::vector<std::string> affiliations;
};

int cmd_pipeline_run(Globals const& g, PipelineArgs const& a) {
  auto const dir = g.resolved_data_dir();
  if (!fs::exists(dir / "analytics.db")) {
    throw Error(ErrorCode::unavailable, "no datastore under " + dir.string());
  }
  store::Datastore::Options so;
  so.data_dir = dir;
  store::Datastore store(so);

  json filter = json::object();
  if (!a.from.empty()) filter["from"] = a.from;
  if (!a.to.empty()) filter["to"] = a.to;
  auto const known = store.list_affiliations();
  if (!a.affiliations.empty()) {
    auto lower = [](std::string s) {
      std::transform(s.begin(), s.end(), s.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      return s;
    };
    json ids = json::array();
    for (auto const& name : a.affiliations) {
      auto const it = std::find_if(known.begin(), known.end(), [&](store::Affiliation const& x) {
        return lower(x.name) == lower(name) || x.affiliation_id == name;
      });
      if (it == known.end()) throw Error(ErrorCode::validation, "unknown affiliation " + name);
      ids.push_back(it->affiliation_id);
    }
    filter["affiliation_ids"] = ids;
  }
  auto spec = pipeline::filter_from_json(filter);
  std::vector<std::string> known_ids;
  for (auto const& x : known) known_ids.push_back(x.affiliation_id);
  spec.validate(&known_ids);

  pipeline::Pipeline pipe(dir / "cache");
  auto const snap_id = pipe.put_snapshot(api::snapshot_of(store));
  auto const run = pipe.run(snap_id, spec);

  if (g.json_out) {
    std::cout << json{{"digest", run.bundle->digest},
                      {"snapshot_id", snap_id},
                      {"bundle", run.path.string()},
                      {"cache_hit", run.cache_hit},
                      {"rides", run.bundle->rides.size()}}
                     .dump()
              << "\n";
  } else {
    std::cout << "digest " << run.bundle->digest << "\n"
              << "bundle " << run.path.string() << "\n"
              << "cache_hit " << (run.cache_hit ? "true" : "false") << "\n"
              << "rides " << run.bundle->rides.size() << "\n";
  }
  return ok;
}

// -- report build -----------------------------------------------------------

struct ReportArgs {
  std::string bundle;
  std::string out;
};

int cmd_report_build(Globals const& g, ReportArgs const& a) {
  if (!fs::exists(fs::path(a.bundle) / "manifest.json")) {
    throw Error(ErrorCode::not_found, "no bundle at " + a.bundle);
  }
  auto const bundle = pipeline::read_bundle(a.bundle);
  auto const id = report::report_id_for(bundle.digest);
  fs::path const out = a.out.empty() ? g.resolved_data_dir() / "reports" / id : fs::path(a.out);
  fs::create_directories(out.parent_path().empty() ? fs::path(".") : out.parent_path());
  auto const r = report::write_report(bundle, out);
  if (g.json_out) {
    std::cout << json{{"report_id", r.report_id},
                      {"path", out.string()},
                      {"pipeline_digest", r.pipeline_digest},
                      {"sections", r.sections.size()}}
                     .dump()
              << "\n";
  } else {
    std::cout << out.string() << "\n";
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairfare: take-rate transparency platform"};
  app.require_subcommand(1);
  // Global options are accepted after the subcommand too.
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_file, "KEY=VALUE settings file");
  app.add_option("--data-dir", g.data_dir, "data directory (default $DATA_DIR or ./fairfare-data)");
  app.add_flag("--json", g.json_out, "machine-readable output");

  SeedArgs seed;
  auto* seed_cmd = app.add_subcommand("seed", "populate the provider mock");
  seed_cmd->add_option("--drivers", seed.drivers)->check(CLI::Range(0, 100000));
  seed_cmd->add_option("--rides", seed.rides)->check(CLI::Range(0, 1000000));
  seed_cmd->add_option("--seed", seed.seed);
  seed_cmd->add_option("--surge-prob", seed.surge_prob)->check(CLI::Range(0.0, 1.0));
  seed_cmd->add_option("--airport-prob", seed.airport_prob)->check(CLI::Range(0.0, 1.0));
  seed_cmd->add_option("--era-cutover", seed.era_cutover, "YYYY-MM-DD");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the API with the provider mock co-hosted");
  serve_cmd->add_option("--port", serve.port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", serve.host);

  SyncArgs sync;
  auto* sync_cmd = app.add_subcommand("sync", "refresh linked drivers on a running service");
  sync_cmd->add_option("--driver", sync.driver);
  sync_cmd->add_option("--server", sync.server, "service URL (default $FAIRFARE_URL)");
  sync_cmd->add_option("--simulate-days", sync.simulate_days,
                       "dev mode: have the mock produce this many new days first")
      ->check(CLI::Range(0, 365));
  sync_cmd->add_option("--rides-per-day", sync.rides_per_day)->check(CLI::Range(0, 1000));

  PipelineArgs pipe;
  auto* pipeline_cmd = app.add_subcommand("pipeline", "analysis pipeline");
  pipeline_cmd->fallthrough();
  pipeline_cmd->require_subcommand(1);
  auto* run_cmd = pipeline_cmd->add_subcommand("run", "clean, aggregate and write a bundle");
  run_cmd->add_option("--from", pipe.from, "YYYY-MM-DD");
  run_cmd->add_option("--to", pipe.to, "YYYY-MM-DD, inclusive");
  run_cmd->add_option("--affiliation", pipe.affiliations, "affiliation name; repeatable");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "reports");
  report_cmd->fallthrough();
  report_cmd->require_subcommand(1);
  auto* build_cmd = report_cmd->add_subcommand("build", "render a bundle");
  build_cmd->add_option("--bundle", rep.bundle)->required();
  build_cmd->add_option("--out", rep.out, "output directory (default DATA_DIR/reports/<id>)");

  try {
    app.parse(argc, argv);
  } catch (CLI::ParseError const& e) {
    int const rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }

  try {
    if (*seed_cmd) return cmd_seed(g, seed);
    if (*serve_cmd) return cmd_serve(g, serve);
    if (*sync_cmd) return cmd_sync(g, sync);
    if (*run_cmd) return cmd_pipeline_run(g, pipe);
    if (*build_cmd) return cmd_report_build(g, rep);
  } catch (Error const& e) {
    std::cerr << "fairfare: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (std::exception const& e) {
    std::cerr << "fairfare: " << e.what() << "\n";
    return contract;
  }
  return usage;
}
