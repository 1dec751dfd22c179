#include "fairfare/api/platform.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"

namespace fairfare::api {

using http::Request;
using http::Response;
using nlohmann::json;
namespace fs = std::filesystem;

// -- config -----------------------------------------------------------------

PlatformConfig PlatformConfig::from_env(std::map<std::string, std::string> const& overrides) {
  auto get = [&](char const* key) -> std::optional<std::string> {
    if (auto it = overrides.find(key); it != overrides.end()) return it->second;
    if (char const* v = std::getenv(key)) return std::string(v);
    return std::nullopt;
  };
  PlatformConfig c;
  c.admin_key = get("ADMIN_KEY").value_or("");
  c.webhook_secret = get("PROVIDER_WEBHOOK_SECRET").value_or("");
  if (auto v = get("BASE_URL")) c.base_url = *v;
  if (auto v = get("DATA_DIR")) c.data_dir = *v;
  if (auto v = get("PROVIDER_URL"); v && !v->empty()) {
    c.cohost_provider = false;
    c.provider_url = *v;
  }
  if (auto v = get("SMS_TRANSCRIPT")) c.sms_transcript = *v;
  return c;
}

// -- jobs -------------------------------------------------------------------

JobRunner::JobRunner(bool async) : async_(async) {
  if (async_) worker_ = std::thread([this] { loop(); });
}

JobRunner::~JobRunner() {
  if (!async_) return;
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void JobRunner::submit(std::function<void()> job) {
  if (!async_) {
    job();
    return;
  }
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(job));
  }
  cv_.notify_one();
}

void JobRunner::wait_idle() {
  if (!async_) return;
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

void JobRunner::loop() {
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
    if (queue_.empty()) return;  // stopping with nothing left
    auto job = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    try {
      job();
    } catch (std::exception const& e) {
      std::cerr << "background job failed: " << e.what() << std::endl;
    }
    lock.lock();
    busy_ = false;
    if (queue_.empty()) idle_cv_.notify_all();
  }
}

// -- helpers ----------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(std::string const& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t parse_count(std::optional<std::string> const& text, std::size_t fallback,
                        char const* name) {
  if (!text) return fallback;
  try {
    std::size_t used = 0;
    long long const v = std::stoll(*text, &used);
    if (used != text->size() || v < 0) throw std::invalid_argument(name);
    return static_cast<std::size_t>(v);
  } catch (std::logic_error const&) {
    throw Error(ErrorCode::bad_request, std::string(name) + " must be a non-negative integer");
  }
}

struct Page {
  std::size_t offset;
  std::size_t limit;
};

Page page_of(Request const& req, std::size_t default_limit) {
  Page p{parse_count(req.query_param("offset"), 0, "offset"),
         parse_count(req.query_param("limit"), default_limit, "limit")};
  if (p.limit == 0 || p.limit > 5000) {
    throw Error(ErrorCode::bad_request, "limit must be between 1 and 5000");
  }
  return p;
}

json filter_json_from_query(Request const& req) {
  json j = json::object();
  if (auto v = req.query_param("affiliation_ids")) j["affiliation_ids"] = split_csv(*v);
  if (auto v = req.query_param("from")) j["from"] = *v;
  if (auto v = req.query_param("to")) j["to"] = *v;
  if (auto v = req.query_param("categories")) j["categories"] = split_csv(*v);
  return j;
}

json sync_json(store::SyncState const& s) {
  json j{{"driver_id", s.driver_id},
         {"phase", std::string(store::to_string(s.phase))},
         {"activities_ingested", s.activities_ingested},
         {"survey_invited", s.survey_invited}};
  j["last_event_at"] = s.last_event_at ? json(format_timestamp(*s.last_event_at)) : json(nullptr);
  return j;
}

json receipt_json(store::DeletionReceipt const& r) {
  return {{"driver_id", r.driver_id},
          {"deleted_at", format_timestamp(r.deleted_at)},
          {"counts",
           {{"pii", r.pii},
            {"activities", r.activities},
            {"surveys", r.surveys},
            {"sync", r.sync},
            {"other", r.other}}}};
}

json bundle_json(pipeline::Bundle const& b, bool cache_hit) {
  return {{"digest", b.digest},
          {"snapshot_id", b.snapshot_id},
          {"pipeline_version", b.pipeline_version},
          {"cache_hit", cache_hit},
          {"data_as_of", format_timestamp(b.data_as_of)},
          {"filter", pipeline::to_json(b.filter)},
          {"cleaning", pipeline::to_json(b.cleaning)},
          {"summary", pipeline::to_json(b.summary)},
          {"by_affiliation", pipeline::to_json(b.by_affiliation)},
          {"by_region", pipeline::to_json(b.by_region)},
          {"weekly", pipeline::to_json(b.weekly)},
          {"airport", pipeline::to_json(b.airport)},
          {"surge", pipeline::to_json(b.surge)},
          {"perception", pipeline::to_json(b.perception)},
          {"rate_per_mile", pipeline::to_json(b.rate_per_mile)}};
}

std::string read_file(fs::path const& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

// -- platform ---------------------------------------------------------------

Platform::Platform(PlatformConfig config)
    : config_(std::move(config)), jobs_(config_.async_jobs) {
  if (!config_.data_dir.empty()) fs::create_directories(config_.data_dir);
  // Without a data directory, reports go to scratch space removed on exit.
  reports_dir_ = config_.data_dir.empty()
                     ? fs::temp_directory_path() / ("fairfare-reports-" + crypto::random_hex(6))
                     : config_.data_dir / "reports";

  store::Datastore::Options so;
  so.data_dir = config_.data_dir;
  so.clock = config_.clock;
  store_ = std::make_unique<store::Datastore>(so);

  if (config_.cohost_provider) {
    provider::ProviderMock::Options mo;
    mo.webhook_secret = config_.webhook_secret;
    mo.clock = config_.clock;
    mock_ = std::make_unique<provider::ProviderMock>(mo);
    if (!config_.data_dir.empty() && fs::exists(config_.data_dir / "provider.json")) {
      mock_->load_state(json::parse(read_file(config_.data_dir / "provider.json")));
    }
    client_ = std::make_unique<provider::InProcessProviderClient>(*mock_);
  } else {
    client_ = std::make_unique<provider::HttpProviderClient>(config_.provider_url);
  }

  if (config_.sms_transcript.empty()) {
    sms_ = std::make_unique<survey::ConsoleSms>(std::cout);
  } else {
    sms_ = std::make_unique<survey::TranscriptSms>(config_.sms_transcript, config_.clock);
  }
  surveys_ = std::make_unique<survey::SurveyService>(
      *store_, *sms_, survey::SurveyService::Options{config_.base_url});

  ingest::Ingestor::Options io;
  io.webhook_secret = config_.webhook_secret;
  io.survey_threshold = config_.survey_threshold;
  ingestor_ = std::make_unique<ingest::Ingestor>(
      *store_, *client_, io, [this](std::string const& driver_id) {
        try {
          surveys_->issue_invite(driver_id);
          return true;
        } catch (Error const& e) {
          if (e.code() == ErrorCode::conflict) return false;
          throw;
        }
      });

  if (mock_) {
    // In-process delivery; the HTTP receiver serves external providers.
    mock_->register_webhook_endpoint([this](std::string const& body, std::string const& sig) {
      return ingestor_->handle_webhook(body, sig).status;
    });
  }

  pipeline_ = std::make_unique<pipeline::Pipeline>(
      config_.data_dir.empty() ? fs::path{} : config_.data_dir / "cache");
  fs::create_directories(reports_dir());

  add_routes();
  if (mock_) provider::add_provider_routes(router_, *mock_);
}

Platform::~Platform() {
  jobs_.wait_idle();
  save_provider_state();
  if (config_.data_dir.empty()) {
    std::error_code ec;
    fs::remove_all(reports_dir(), ec);
  }
}

void Platform::save_provider_state() {
  if (!mock_ || config_.data_dir.empty()) return;
  std::lock_guard lock(provider_save_mu_);
  auto const path = config_.data_dir / "provider.json";
  auto const tmp = config_.data_dir / "provider.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << mock_->save_state().dump(1) << '\n';
  }
  fs::rename(tmp, path);
}

pipeline::Snapshot snapshot_of(store::Datastore const& store) {
  pipeline::Snapshot s;
  s.activities = store.all_activities();
  for (auto const& [driver, aff] : store.driver_affiliations()) {
    s.driver_affiliations[driver] = aff ? std::vector<std::string>{*aff} : std::vector<std::string>{};
  }
  for (auto const& a : store.list_affiliations()) {
    s.affiliations.push_back({a.affiliation_id, a.name, a.region_tag});
  }
  s.responses = store.all_responses();
  return s;
}

pipeline::Snapshot Platform::snapshot() const { return snapshot_of(*store_); }

pipeline::FilterSpec Platform::parse_filter(json const& j) const {
  auto f = pipeline::filter_from_json(j);
  std::vector<std::string> known;
  for (auto const& a : store_->list_affiliations()) known.push_back(a.affiliation_id);
  f.validate(&known);
  return f;
}

std::optional<store::AccessToken> Platform::authenticate(Request const& req) const {
  auto const bearer = req.bearer_token();
  if (!bearer) return std::nullopt;
  auto token = store_->authenticate(*bearer, config_.admin_key);
  if (!token) throw Error(ErrorCode::unauthorized, "unknown bearer token");
  return token;
}

store::AccessToken Platform::require_admin(Request const& req) const {
  auto const t = authenticate(req);
  if (!t) throw Error(ErrorCode::unauthorized, "admin token required");
  if (!t->is_admin()) throw Error(ErrorCode::forbidden, "admin token required");
  return *t;
}

store::AccessToken Platform::require_driver(Request const& req) const {
  auto const t = authenticate(req);
  if (!t) throw Error(ErrorCode::unauthorized, "driver token required");
  if (t->is_admin()) throw Error(ErrorCode::forbidden, "this endpoint acts for a driver");
  return *t;
}

store::AccessToken Platform::require_self_or_admin(Request const& req,
                                                   std::string const& driver_id) const {
  auto const t = authenticate(req);
  if (!t) throw Error(ErrorCode::unauthorized, "token required");
  if (!t->is_admin() && t->driver_id != driver_id) {
    throw Error(ErrorCode::not_found, "unknown driver");
  }
  return *t;
}

void Platform::add_routes() {
  auto& r = router_;

  r.add("GET", "/healthz", [](Request const&) {
    return Response::json(200, {{"status", "ok"}});
  });

  r.add("GET", "/affiliations", [this](Request const&) {
    json data = json::array();
    for (auto const& a : store_->list_affiliations()) {
      data.push_back({{"affiliation_id", a.affiliation_id},
                      {"name", a.name},
                      {"region_tag", a.region_tag ? json(*a.region_tag) : json(nullptr)}});
    }
    return Response::json(200, {{"data", data}});
  });

  r.add("POST", "/drivers", [this](Request const& req) {
    json const body = req.json_body();
    if (!body.is_object()) throw Error(ErrorCode::bad_request, "body must be an object");
    json const consent = body.value("consent", json::object());
    store::ConsentRecord rec;
    rec.consented = consent.value("consented", false);
    rec.consent_version = consent.value("consent_version", std::string());
    rec.consented_at = store_->now();
    if (!rec.consented || rec.consent_version.empty()) {
      throw Error(ErrorCode::validation, "enrollment refused: consent not given");
    }
    std::optional<std::string> affiliation;
    if (body.contains("affiliation_id") && !body["affiliation_id"].is_null()) {
      auto const id = body["affiliation_id"].get<std::string>();
      if (!store_->find_affiliation(id)) throw Error(ErrorCode::validation, "unknown affiliation");
      affiliation = id;
    } else if (body.contains("affiliation_name") && !body["affiliation_name"].is_null()) {
      auto const name = body["affiliation_name"].get<std::string>();
      if (auto existing = store_->find_affiliation_by_name(name)) {
        affiliation = existing->affiliation_id;
      } else {
        std::optional<std::string> tag;
        if (body.contains("region_tag") && !body["region_tag"].is_null()) {
          tag = body["region_tag"].get<std::string>();
        }
        affiliation = store_->create_affiliation(name, tag).affiliation_id;
      }
    }
    auto const driver = store_->create_driver(body.value("display_name", std::string()),
                                              body.value("phone", std::string()), affiliation,
                                              rec);
    auto const token = store_->issue_driver_token(driver.driver_id);
    return Response::json(201, {{"driver_id", driver.driver_id},
                                {"token", token},
                                {"affiliation_id", affiliation ? json(*affiliation) : json(nullptr)}});
  });

  r.add("POST", "/drivers/:id/link", [this](Request const& req) {
    auto const& id = req.param("id");
    require_self_or_admin(req, id);
    json const body = req.body.empty() ? json::object() : req.json_body();
    if (!body.is_object()) throw Error(ErrorCode::bad_request, "body must be an object");
    if (body.contains("account_id")) {
      ingestor_->bind_driver(id, body.at("account_id").get<std::string>());
    } else {
      ingestor_->link_driver(id, body.value("params", json::object()),
                             body.value("seed", std::uint64_t{0}));
      save_provider_state();
    }
    ingestor_->begin_backfill(id);
    jobs_.submit([this, id] { ingestor_->run_backfill(id); });
    auto const state = store_->get_sync_state(id);
    return Response::json(202, sync_json(*state));
  });

  r.add("GET", "/drivers/:id/status", [this](Request const& req) {
    auto const& id = req.param("id");
    require_self_or_admin(req, id);
    if (store_->is_tombstoned(id)) throw Error(ErrorCode::gone, "driver has been deleted");
    if (!store_->driver_exists(id)) throw Error(ErrorCode::not_found, "unknown driver");
    auto const state = store_->get_sync_state(id);
    if (!state) {
      return Response::json(200, {{"driver_id", id}, {"phase", "unlinked"},
                                  {"activities_ingested", 0}, {"survey_invited", false},
                                  {"last_event_at", nullptr}});
    }
    return Response::json(200, sync_json(*state));
  });

  r.add("POST", "/webhooks/provider", [this](Request const& req) {
    auto const res = ingestor_->handle_webhook(req.body, req.header(provider::kSignatureHeader));
    if (res.status != 200) return Response::error(res.status, res.status == 401 ? "unauthorized" : "bad_request", res.message);
    return Response::json(200, {{"outcome", res.outcome}, {"rows_changed", res.rows_changed}});
  });

  r.add("GET", "/survey/:token", [this](Request const& req) {
    return Response::json(200, survey::to_json(surveys_->fetch_survey(req.param("token"))));
  });

  r.add("POST", "/survey/:token", [this](Request const& req) {
    auto const resp = surveys_->submit(req.param("token"), req.json_body());
    return Response::json(201, {{"driver_id", resp.driver_id},
                                {"estimated_take_rate_pct", resp.estimated_take_rate_pct},
                                {"fair_take_rate_pct", resp.fair_take_rate_pct},
                                {"submitted_at", format_timestamp(resp.submitted_at)}});
  });

  r.add("GET", "/me/summary", [this](Request const& req) {
    auto const t = require_driver(req);
    return Response::json(200, survey::to_json(surveys_->personal_summary(t.driver_id)));
  });

  r.add("GET", "/me/activities", [this](Request const& req) {
    auto const t = require_driver(req);
    auto const page = page_of(req, config_.default_page_limit);
    store::ActivityQuery q;
    q.offset = page.offset;
    q.limit = page.limit;
    json data = json::array();
    for (auto const& a : store_->get_activities(t, q)) data.push_back(to_json(a));
    return Response::json(200, {{"data", data}, {"offset", page.offset}, {"limit", page.limit}});
  });

  r.add("POST", "/me/delete", [this](Request const& req) {
    auto const t = require_driver(req);
    auto const state = store_->get_sync_state(t.driver_id);
    auto const receipt = store_->delete_driver(t.driver_id);
    if (state && !state->account_id.empty()) {
      // Un-enroll at the provider too; its removal event is discarded.
      try {
        client_->remove_account(state->account_id);
      } catch (Error const&) {
      }
      save_provider_state();
    }
    return Response::json(200, receipt_json(receipt));
  });

  // -- admin ----------------------------------------------------------------

  r.add("GET", "/admin/aggregates", [this](Request const& req) {
    require_admin(req);
    auto const filter = parse_filter(filter_json_from_query(req));
    auto const id = pipeline_->put_snapshot(snapshot());
    auto const run = pipeline_->run(id, filter);
    return Response::json(200, bundle_json(*run.bundle, run.cache_hit));
  });

  r.add("POST", "/admin/reports", [this](Request const& req) {
    require_admin(req);
    json const body = req.body.empty() ? json::object() : req.json_body();
    auto const filter = parse_filter(body.value("filter", json::object()));
    auto const snap_id = pipeline_->put_snapshot(snapshot());
    auto const digest = pipeline::bundle_digest(snap_id, filter, pipeline_->config());
    auto const report_id = report::report_id_for(digest);
    auto const dir = reports_dir() / report_id;
    {
      std::lock_guard lock(reports_mu_);
      auto it = report_jobs_.find(report_id);
      bool const known = it != report_jobs_.end() && it->second.status != "failed";
      if (known || fs::exists(dir / "manifest.json")) {
        return Response::json(202, {{"report_id", report_id},
                                    {"pipeline_digest", digest},
                                    {"status", known ? it->second.status : "ready"}});
      }
      report_jobs_[report_id] = {"pending", ""};
    }
    jobs_.submit([this, snap_id, filter, report_id, dir] {
      try {
        auto const run = pipeline_->run(snap_id, filter);
        report::write_report(*run.bundle, dir);
        std::lock_guard lock(reports_mu_);
        report_jobs_[report_id] = {"ready", ""};
      } catch (std::exception const& e) {
        std::lock_guard lock(reports_mu_);
        report_jobs_[report_id] = {"failed", e.what()};
      }
    });
    std::lock_guard lock(reports_mu_);
    return Response::json(202, {{"report_id", report_id},
                                {"pipeline_digest", digest},
                                {"status", report_jobs_[report_id].status}});
  });

  r.add("GET", "/admin/reports/:id", [this](Request const& req) {
    require_admin(req);
    auto const& id = req.param("id");
    if (id.rfind("rpt_", 0) != 0 || id.find_first_of("/\\.") != std::string::npos) {
      throw Error(ErrorCode::not_found, "unknown report");
    }
    {
      std::lock_guard lock(reports_mu_);
      auto it = report_jobs_.find(id);
      if (it != report_jobs_.end() && it->second.status == "pending") {
        return Response::json(202, {{"report_id", id}, {"status", "pending"}});
      }
      if (it != report_jobs_.end() && it->second.status == "failed") {
        return Response::json(500, {{"report_id", id}, {"status", "failed"},
                                    {"error", {{"code", "internal"}, {"message", it->second.error}}}});
      }
    }
    auto const dir = reports_dir() / id;
    if (!fs::exists(dir / "manifest.json")) throw Error(ErrorCode::not_found, "unknown report");
    auto const format = req.query_param("format").value_or("json");
    Response res;
    if (format == "html") {
      res.body = read_file(dir / "report.html");
      res.content_type = "text/html; charset=utf-8";
    } else if (format == "text") {
      res.body = read_file(dir / "report.txt");
      res.content_type = "text/plain; charset=utf-8";
    } else if (format == "json") {
      res.body = read_file(dir / "report.json");
    } else if (format.rfind("csv:", 0) == 0) {
      auto const name = format.substr(4);
      if (name.find_first_of("/\\") != std::string::npos || !fs::exists(dir / "csv" / name)) {
        throw Error(ErrorCode::not_found, "unknown csv file");
      }
      res.body = read_file(dir / "csv" / name);
      res.content_type = "text/csv; charset=utf-8";
    } else {
      throw Error(ErrorCode::bad_request, "format must be json, html, text or csv:<file>");
    }
    return res;
  });

  r.add("GET", "/admin/drivers", [this](Request const& req) {
    require_admin(req);
    auto const page = page_of(req, config_.default_page_limit);
    auto const affs = store_->driver_affiliations();
    json data = json::array();
    for (auto const& id : store_->list_driver_ids(page.offset, page.limit)) {
      auto const state = store_->get_sync_state(id);
      auto const aff = affs.find(id);
      data.push_back({{"driver_id", id},
                      {"affiliation_id", aff != affs.end() && aff->second ? json(*aff->second) : json(nullptr)},
                      {"phase", state ? std::string(store::to_string(state->phase)) : "unlinked"},
                      {"activities_ingested", state ? state->activities_ingested : 0},
                      {"survey_invited", state && state->survey_invited},
                      {"survey_completed", store_->get_response(id).has_value()}});
    }
    return Response::json(200, {{"data", data}, {"offset", page.offset}, {"limit", page.limit}});
  });

  r.add("GET", "/admin/activities", [this](Request const& req) {
    auto const t = require_admin(req);
    auto const page = page_of(req, config_.default_page_limit);
    auto const filter = parse_filter(filter_json_from_query(req));
    if (filter.categories) throw Error(ErrorCode::bad_request, "categories apply to aggregates only");
    store::ActivityQuery q;
    q.driver_id = req.query_param("driver_id");
    q.affiliation_ids = filter.affiliation_ids;
    q.from = filter.from;
    q.to = filter.to;
    q.offset = page.offset;
    q.limit = page.limit;
    json data = json::array();
    for (auto const& a : store_->get_activities(t, q)) data.push_back(to_json(a));
    return Response::json(200, {{"data", data}, {"offset", page.offset}, {"limit", page.limit}});
  });

  r.add("GET", "/admin/export", [this](Request const& req) {
    require_admin(req);
    auto const format = req.query_param("format").value_or("ndjson");
    std::ostringstream out;
    Response res;
    if (format == "ndjson") {
      store_->export_ndjson(out);
      res.content_type = "application/x-ndjson";
    } else if (format == "csv") {
      store_->export_csv(out);
      res.content_type = "text/csv; charset=utf-8";
    } else {
      throw Error(ErrorCode::bad_request, "format must be ndjson or csv");
    }
    store_->audit("admin", "export_" + format, "");
    res.body = out.str();
    return res;
  });

  r.add("POST", "/admin/sync", [this](Request const& req) {
    require_admin(req);
    json const body = req.body.empty() ? json::object() : req.json_body();
    int const days = body.value("simulate_days", 0);
    int const per_day = body.value("rides_per_day", 8);
    if (days < 0 || per_day < 0) throw Error(ErrorCode::bad_request, "counts must be >= 0");
    std::vector<std::string> drivers;
    if (body.contains("driver_id")) {
      auto const id = body.at("driver_id").get<std::string>();
      if (!store_->get_sync_state(id)) throw Error(ErrorCode::not_found, "driver is not linked");
      drivers.push_back(id);
    } else {
      for (auto const& s : store_->list_sync_states()) {
        if (s.phase != store::Phase::unlinked) drivers.push_back(s.driver_id);
      }
    }
    jobs_.wait_idle();  // let pending backfills land first
    if (days > 0) {
      if (!mock_) throw Error(ErrorCode::bad_request, "simulate_days needs the co-hosted provider");
      for (auto const& id : drivers) {
        auto const acct = store_->get_sync_state(id)->account_id;
        for (int d = 0; d < days; ++d) mock_->simulate_day(acct, per_day);
      }
      save_provider_state();
    }
    json deltas = json::array();
    for (auto const& id : drivers) {
      ingest::RefreshDelta d;
      try {
        d = ingestor_->refresh_driver(id);
      } catch (Error const& e) {
        d.driver_id = id;
        d.ok = false;
        d.error = e.what();
      }
      deltas.push_back({{"driver_id", d.driver_id},
                        {"rows_changed", d.rows_changed},
                        {"activities", d.activities},
                        {"ok", d.ok},
                        {"retryable", d.retryable},
                        {"error", d.error},
                        {"phase", std::string(store::to_string(store_->get_sync_state(id)->phase))}});
    }
    return Response::json(200, {{"deltas", deltas}});
  });

  r.add("DELETE", "/admin/drivers/:id", [this](Request const& req) {
    require_admin(req);
    auto const& id = req.param("id");
    auto const state = store_->get_sync_state(id);
    auto const receipt = store_->delete_driver(id);
    store_->audit("admin", "delete_driver", "");
    if (state && !state->account_id.empty()) {
      try {
        client_->remove_account(state->account_id);
      } catch (Error const&) {
      }
      save_provider_state();
    }
    return Response::json(200, receipt_json(receipt));
  });
}

}  // namespace fairfare::api
