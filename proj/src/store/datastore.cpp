#include "fairfare/store/datastore.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"
#include "fairfare/format.hpp"
#include "sqlite_util.hpp"

namespace fairfare::store {

using detail::Statement;
using nlohmann::json;

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::linked: return "linked";
    case Phase::backfilling: return "backfilling";
    case Phase::synced: return "synced";
    case Phase::refreshing: return "refreshing";
    case Phase::unlinked: return "unlinked";
  }
  return "unlinked";
}

Phase parse_phase(std::string_view text) {
  if (text == "linked") return Phase::linked;
  if (text == "backfilling") return Phase::backfilling;
  if (text == "synced") return Phase::synced;
  if (text == "refreshing") return Phase::refreshing;
  if (text == "unlinked") return Phase::unlinked;
  throw Error(ErrorCode::bad_request, "unknown phase " + std::string(text));
}

bool transition_allowed(Phase from, Phase to) {
  if (from == to || to == Phase::unlinked) return true;
  switch (from) {
    case Phase::linked: return to == Phase::backfilling;
    case Phase::backfilling: return to == Phase::synced;
    case Phase::synced: return to == Phase::refreshing;
    case Phase::refreshing: return to == Phase::synced;
    case Phase::unlinked: return false;
  }
  return false;
}

namespace {

constexpr char kSchema[] = R"SQL(
CREATE TABLE IF NOT EXISTS main.affiliations (
  affiliation_id TEXT PRIMARY KEY,
  name TEXT NOT NULL UNIQUE COLLATE NOCASE,
  region_tag TEXT
);
CREATE TABLE IF NOT EXISTS main.driver_affiliations (
  driver_id TEXT PRIMARY KEY,
  affiliation_id TEXT
);
CREATE TABLE IF NOT EXISTS main.activities (
  activity_id TEXT PRIMARY KEY,
  driver_id TEXT NOT NULL,
  start_time INTEGER,
  digest TEXT NOT NULL,
  payload TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS main.activities_by_driver ON activities(driver_id);
CREATE TABLE IF NOT EXISTS main.sync_state (
  driver_id TEXT PRIMARY KEY,
  phase TEXT NOT NULL,
  activities_ingested INTEGER NOT NULL,
  last_event_at INTEGER,
  survey_invited INTEGER NOT NULL,
  account_id TEXT UNIQUE,
  resume_cursor TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS main.processed_events (
  event_id TEXT PRIMARY KEY,
  driver_id TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS main.access_tokens (
  token_hash TEXT PRIMARY KEY,
  driver_id TEXT NOT NULL,
  issued_at INTEGER NOT NULL,
  expires_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS main.survey_invites (
  token_hash TEXT PRIMARY KEY,
  driver_id TEXT NOT NULL UNIQUE,
  issued_at INTEGER NOT NULL,
  consumed INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS main.survey_responses (
  driver_id TEXT PRIMARY KEY,
  estimated_take_rate_pct REAL NOT NULL,
  fair_take_rate_pct REAL NOT NULL,
  factors_text TEXT NOT NULL,
  submitted_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS main.tombstones (
  driver_id TEXT PRIMARY KEY,
  deleted_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS main.audit_log (
  id INTEGER PRIMARY KEY AUTOINCREMENT,
  at INTEGER NOT NULL,
  actor TEXT NOT NULL,
  action TEXT NOT NULL,
  target_driver_id TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS pii.drivers (
  driver_id TEXT PRIMARY KEY,
  display_name TEXT NOT NULL,
  phone TEXT NOT NULL,
  affiliation_id TEXT,
  consented INTEGER NOT NULL,
  consent_version TEXT NOT NULL,
  consented_at INTEGER NOT NULL,
  created_at INTEGER NOT NULL
);
)SQL";

std::int64_t secs(Timestamp t) { return t.time_since_epoch().count(); }
Timestamp from_secs(std::int64_t s) { return Timestamp(std::chrono::seconds(s)); }

}  // namespace

struct Datastore::Tx {
  explicit Tx(sqlite3* db) : db(db) { run("BEGIN IMMEDIATE"); }
  ~Tx() {
    if (!done) sqlite3_exec(db, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    run("COMMIT");
    done = true;
  }
  void run(char const* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw Error(ErrorCode::unavailable, "sqlite: " + msg);
    }
  }
  sqlite3* db;
  bool done = false;
};

Datastore::Datastore(Options options) : options_(std::move(options)) {
  if (!options_.id_hex) options_.id_hex = [](std::size_t n) { return crypto::random_hex(n); };
  if (!options_.clock) options_.clock = system_now;
  std::string main_path = ":memory:";
  std::string pii_path = ":memory:";
  if (!options_.data_dir.empty()) {
    std::filesystem::create_directories(options_.data_dir);
    main_path = (options_.data_dir / "analytics.db").string();
    pii_path = (options_.data_dir / "profiles.db").string();
  }
  if (sqlite3_open(main_path.c_str(), &db_) != SQLITE_OK) {
    std::string msg = sqlite3_errmsg(db_);
    sqlite3_close(db_);
    throw Error(ErrorCode::unavailable, "cannot open datastore: " + msg);
  }
  sqlite3_busy_timeout(db_, 10000);
  {
    Statement attach(db_, "ATTACH DATABASE ? AS pii");
    attach.bind(1, pii_path).run();
  }
  if (!options_.data_dir.empty()) {
    exec("PRAGMA main.journal_mode=WAL");
    exec("PRAGMA pii.journal_mode=WAL");
  }
  // Deleted rows are overwritten on disk, not just unlinked.
  exec("PRAGMA main.secure_delete=ON");
  exec("PRAGMA pii.secure_delete=ON");
  ensure_schema();
}

Datastore::~Datastore() { sqlite3_close(db_); }

void Datastore::exec(char const* sql) const {
  char* err = nullptr;
  if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::unavailable, "sqlite: " + msg);
  }
}

void Datastore::ensure_schema() {
  std::lock_guard lock(mu_);
  exec(kSchema);
}

// -- affiliations -------------------------------------------------------------

Affiliation Datastore::create_affiliation(std::string const& name,
                                          std::optional<std::string> region_tag) {
  if (name.find_first_not_of(" \t\r\n") == std::string::npos || name.size() > 200) {
    throw Error(ErrorCode::validation, "affiliation name must be 1-200 characters");
  }
  std::lock_guard lock(mu_);
  Affiliation a{"aff_" + new_id(6), name, std::move(region_tag)};
  Statement existing(db_, "SELECT 1 FROM affiliations WHERE name = ? COLLATE NOCASE");
  if (existing.bind(1, name).step()) {
    throw Error(ErrorCode::conflict, "affiliation already exists: " + name);
  }
  Statement insert(db_,
                   "INSERT INTO affiliations(affiliation_id, name, region_tag) VALUES (?,?,?)");
  insert.bind(1, a.affiliation_id).bind(2, a.name).bind(3, a.region_tag).run();
  return a;
}

std::vector<Affiliation> Datastore::list_affiliations() const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT affiliation_id, name, region_tag FROM affiliations ORDER BY name COLLATE NOCASE");
  std::vector<Affiliation> out;
  while (q.step()) out.push_back({q.text(0), q.text(1), q.opt_text(2)});
  return out;
}

std::optional<Affiliation> Datastore::find_affiliation(std::string const& id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT affiliation_id, name, region_tag FROM affiliations WHERE affiliation_id = ?");
  if (!q.bind(1, id).step()) return std::nullopt;
  return Affiliation{q.text(0), q.text(1), q.opt_text(2)};
}

std::optional<Affiliation> Datastore::find_affiliation_by_name(std::string const& name) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT affiliation_id, name, region_tag FROM affiliations WHERE name = ? COLLATE NOCASE");
  if (!q.bind(1, name).step()) return std::nullopt;
  return Affiliation{q.text(0), q.text(1), q.opt_text(2)};
}

// -- drivers ------------------------------------------------------------------

DriverProfile Datastore::create_driver(std::string const& display_name,
                                       std::string const& phone,
                                       std::optional<std::string> const& affiliation_id,
                                       ConsentRecord const& consent) {
  if (!consent.consented || consent.consent_version.empty()) {
    throw Error(ErrorCode::validation, "enrollment requires consent");
  }
  static std::regex const e164(R"(\+[1-9][0-9]{6,14})");
  if (!std::regex_match(phone, e164)) {
    throw Error(ErrorCode::validation, "phone must be in E.164 format");
  }
  if (display_name.empty() || display_name.size() > 200) {
    throw Error(ErrorCode::validation, "display_name must be 1-200 characters");
  }
  if (affiliation_id && !find_affiliation(*affiliation_id)) {
    throw Error(ErrorCode::validation, "unknown affiliation_id " + *affiliation_id);
  }
  std::lock_guard lock(mu_);
  DriverProfile p;
  p.driver_id = "drv_" + new_id(8);
  p.display_name = display_name;
  p.phone = phone;
  p.affiliation_id = affiliation_id;
  p.consent = consent;
  p.created_at = now();
  Tx tx(db_);
  Statement pii(db_,
                "INSERT INTO pii.drivers(driver_id, display_name, phone, affiliation_id, "
                "consented, consent_version, consented_at, created_at) VALUES (?,?,?,?,?,?,?,?)");
  pii.bind(1, p.driver_id).bind(2, p.display_name).bind(3, p.phone).bind(4, p.affiliation_id)
      .bind(5, true).bind(6, consent.consent_version).bind(7, secs(consent.consented_at))
      .bind(8, secs(p.created_at)).run();
  Statement link(db_, "INSERT INTO driver_affiliations(driver_id, affiliation_id) VALUES (?,?)");
  link.bind(1, p.driver_id).bind(2, p.affiliation_id).run();
  tx.commit();
  return p;
}

std::optional<DriverProfile> Datastore::get_profile(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT driver_id, display_name, phone, affiliation_id, consented, "
              "consent_version, consented_at, created_at FROM pii.drivers WHERE driver_id = ?");
  if (!q.bind(1, driver_id).step()) return std::nullopt;
  DriverProfile p;
  p.driver_id = q.text(0);
  p.display_name = q.text(1);
  p.phone = q.text(2);
  p.affiliation_id = q.opt_text(3);
  p.consent = ConsentRecord{q.integer(4) != 0, q.text(5), from_secs(q.integer(6))};
  p.created_at = from_secs(q.integer(7));
  return p;
}

bool Datastore::driver_exists(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT 1 FROM driver_affiliations WHERE driver_id = ?");
  return q.bind(1, driver_id).step();
}

bool Datastore::is_tombstoned(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT 1 FROM tombstones WHERE driver_id = ?");
  return q.bind(1, driver_id).step();
}

std::vector<std::string> Datastore::list_driver_ids(std::size_t offset,
                                                    std::size_t limit) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT driver_id FROM driver_affiliations ORDER BY driver_id LIMIT ? OFFSET ?");
  q.bind(1, limit == 0 ? std::int64_t{-1} : static_cast<std::int64_t>(limit))
      .bind(2, static_cast<std::int64_t>(offset));
  std::vector<std::string> out;
  while (q.step()) out.push_back(q.text(0));
  return out;
}

std::map<std::string, std::optional<std::string>> Datastore::driver_affiliations() const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT driver_id, affiliation_id FROM driver_affiliations");
  std::map<std::string, std::optional<std::string>> out;
  while (q.step()) out.emplace(q.text(0), q.opt_text(1));
  return out;
}

// -- tokens -------------------------------------------------------------------

std::string Datastore::issue_driver_token(std::string const& driver_id) {
  return issue_driver_token(driver_id, now() + options_.driver_token_ttl);
}

std::string Datastore::issue_driver_token(std::string const& driver_id,
                                          Timestamp expires_at) {
  if (!driver_exists(driver_id)) throw Error(ErrorCode::not_found, "unknown driver");
  std::string const secret = "dtk_" + crypto::random_hex(16);
  std::lock_guard lock(mu_);
  Statement insert(db_,
                   "INSERT INTO access_tokens(token_hash, driver_id, issued_at, expires_at) "
                   "VALUES (?,?,?,?)");
  insert.bind(1, crypto::sha256_hex(secret)).bind(2, driver_id).bind(3, secs(now()))
      .bind(4, secs(expires_at)).run();
  return secret;
}

std::optional<AccessToken> Datastore::authenticate(std::string const& bearer,
                                                   std::string const& admin_key) const {
  if (bearer.empty()) return std::nullopt;
  if (!admin_key.empty() && crypto::constant_time_equal(bearer, admin_key)) {
    return AccessToken{"admin", AccessToken::Scope::admin, "", now(),
                       make_timestamp(9999, 12, 31)};
  }
  std::string const hash = crypto::sha256_hex(bearer);
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT driver_id, issued_at, expires_at FROM access_tokens WHERE token_hash = ?");
  if (!q.bind(1, hash).step()) return std::nullopt;
  AccessToken token{hash.substr(0, 16), AccessToken::Scope::driver, q.text(0),
                    from_secs(q.integer(1)), from_secs(q.integer(2))};
  if (token.expires_at <= now()) throw Error(ErrorCode::unauthorized, "token expired");
  return token;
}

// -- activities ---------------------------------------------------------------

int Datastore::put_activities(std::string const& driver_id,
                              std::span<RideActivity const> activities) {
  std::vector<std::pair<RideActivity, std::string>> rows;
  rows.reserve(activities.size());
  for (std::size_t i = 0; i < activities.size(); ++i) {
    RideActivity a = activities[i];
    if (auto problem = validate(a)) {
      throw Error(ErrorCode::bad_request,
                  "activity[" + std::to_string(i) + "] " + a.activity_id + ": " + *problem);
    }
    if (a.driver_id != driver_id) {
      throw Error(ErrorCode::bad_request,
                  "activity[" + std::to_string(i) + "] belongs to another driver");
    }
    // Recomputed rather than trusted, so an edited record with a stale
    // digest still counts as a change.
    a.source_payload_digest = compute_payload_digest(a);
    std::string payload = to_json(a).dump();
    rows.emplace_back(std::move(a), std::move(payload));
  }

  std::lock_guard lock(mu_);
  {
    Statement t(db_, "SELECT 1 FROM tombstones WHERE driver_id = ?");
    if (t.bind(1, driver_id).step()) {
      throw Error(ErrorCode::forbidden, "driver has been deleted");
    }
    Statement c(db_, "SELECT consented FROM pii.drivers WHERE driver_id = ?");
    if (!c.bind(1, driver_id).step() || c.integer(0) == 0) {
      throw Error(ErrorCode::forbidden, "no consent on file for driver");
    }
  }
  Tx tx(db_);
  Statement existing(db_, "SELECT driver_id, digest FROM activities WHERE activity_id = ?");
  Statement upsert(db_,
                   "INSERT OR REPLACE INTO activities(activity_id, driver_id, start_time, "
                   "digest, payload) VALUES (?,?,?,?,?)");
  int changed = 0;
  for (auto const& [a, payload] : rows) {
    existing.reset();
    if (existing.bind(1, a.activity_id).step()) {
      if (existing.text(0) != driver_id) {
        throw Error(ErrorCode::conflict, "activity " + a.activity_id + " belongs to another driver");
      }
      if (existing.text(1) == a.source_payload_digest) continue;
    }
    upsert.reset();
    upsert.bind(1, a.activity_id).bind(2, driver_id)
        .bind(3, a.start_time ? std::optional<std::int64_t>(secs(*a.start_time)) : std::nullopt)
        .bind(4, a.source_payload_digest).bind(5, payload).run();
    ++changed;
  }
  tx.commit();
  return changed;
}

std::vector<RideActivity> Datastore::get_activities(AccessToken const& token,
                                                    ActivityQuery const& query) {
  if (token.expires_at <= now()) throw Error(ErrorCode::unauthorized, "token expired");
  ActivityQuery q = query;
  if (!token.is_admin()) {
    if (q.driver_id && *q.driver_id != token.driver_id) {
      audit("driver:" + token.driver_id, "denied_cross_driver_read", *q.driver_id);
      return {};
    }
    q.driver_id = token.driver_id;
  }
  std::string sql =
      "SELECT a.payload FROM activities a LEFT JOIN driver_affiliations d "
      "ON a.driver_id = d.driver_id WHERE 1 = 1";
  if (q.driver_id) sql += " AND a.driver_id = ?";
  if (q.from) sql += " AND a.start_time >= ?";
  if (q.to) sql += " AND a.start_time <= ?";
  if (q.affiliation_ids) {
    sql += " AND d.affiliation_id IN (";
    for (std::size_t i = 0; i < q.affiliation_ids->size(); ++i) sql += i ? ",?" : "?";
    sql += ")";
  }
  sql += " ORDER BY a.start_time IS NULL, a.start_time, a.activity_id LIMIT ? OFFSET ?";
  std::lock_guard lock(mu_);
  Statement s(db_, sql);
  int i = 1;
  if (q.driver_id) s.bind(i++, *q.driver_id);
  if (q.from) s.bind(i++, secs(*q.from));
  if (q.to) s.bind(i++, secs(*q.to));
  if (q.affiliation_ids) {
    for (auto const& id : *q.affiliation_ids) s.bind(i++, id);
  }
  s.bind(i++, q.limit == 0 ? std::int64_t{-1} : static_cast<std::int64_t>(q.limit));
  s.bind(i++, static_cast<std::int64_t>(q.offset));
  std::vector<RideActivity> out;
  while (s.step()) out.push_back(activity_from_json(json::parse(s.text(0))));
  return out;
}

std::int64_t Datastore::count_activities(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT count(*) FROM activities WHERE driver_id = ?");
  q.bind(1, driver_id).step();
  return q.integer(0);
}

std::int64_t Datastore::count_completed_rideshare(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT count(*) FROM activities WHERE driver_id = ? "
              "AND json_extract(payload, '$.activity_type') = 'rideshare' "
              "AND json_extract(payload, '$.status') = 'completed'");
  q.bind(1, driver_id).step();
  return q.integer(0);
}

std::vector<RideActivity> Datastore::all_activities() const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT payload FROM activities ORDER BY start_time IS NULL, start_time, activity_id");
  std::vector<RideActivity> out;
  while (q.step()) out.push_back(activity_from_json(json::parse(q.text(0))));
  return out;
}

// -- sync state ---------------------------------------------------------------

namespace {

SyncState read_sync(Statement const& q) {
  SyncState s;
  s.driver_id = q.text(0);
  s.phase = parse_phase(q.text(1));
  s.activities_ingested = q.integer(2);
  if (!q.is_null(3)) s.last_event_at = from_secs(q.integer(3));
  s.survey_invited = q.integer(4) != 0;
  s.account_id = q.text(5);
  s.resume_cursor = q.text(6);
  return s;
}

constexpr char kSyncColumns[] =
    "driver_id, phase, activities_ingested, last_event_at, survey_invited, "
    "coalesce(account_id, ''), resume_cursor";

}  // namespace

std::optional<SyncState> Datastore::get_sync_state(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  {
    Statement t(db_, "SELECT 1 FROM tombstones WHERE driver_id = ?");
    if (t.bind(1, driver_id).step()) {
      SyncState s;
      s.driver_id = driver_id;
      s.phase = Phase::unlinked;
      s.tombstoned = true;
      return s;
    }
  }
  Statement q(db_, std::string("SELECT ") + kSyncColumns + " FROM sync_state WHERE driver_id = ?");
  if (!q.bind(1, driver_id).step()) return std::nullopt;
  return read_sync(q);
}

void Datastore::put_sync_state(SyncState const& state) {
  std::lock_guard lock(mu_);
  Tx tx(db_);
  Statement t(db_, "SELECT 1 FROM tombstones WHERE driver_id = ?");
  if (t.bind(1, state.driver_id).step()) {
    throw Error(ErrorCode::gone, "driver has been deleted");
  }
  Statement q(db_, std::string("SELECT ") + kSyncColumns + " FROM sync_state WHERE driver_id = ?");
  if (q.bind(1, state.driver_id).step()) {
    SyncState const current = read_sync(q);
    if (!transition_allowed(current.phase, state.phase)) {
      throw Error(ErrorCode::conflict, "illegal sync transition " +
                                           std::string(to_string(current.phase)) + " -> " +
                                           std::string(to_string(state.phase)));
    }
    if (current.survey_invited && !state.survey_invited) {
      throw Error(ErrorCode::contract_violation, "survey_invited latch cannot be cleared");
    }
  } else if (state.phase != Phase::linked) {
    throw Error(ErrorCode::conflict, "sync state must start linked");
  }
  Statement w(db_,
              "INSERT OR REPLACE INTO sync_state(driver_id, phase, activities_ingested, "
              "last_event_at, survey_invited, account_id, resume_cursor) VALUES (?,?,?,?,?,?,?)");
  w.bind(1, state.driver_id).bind(2, std::string(to_string(state.phase)))
      .bind(3, state.activities_ingested)
      .bind(4, state.last_event_at ? std::optional<std::int64_t>(secs(*state.last_event_at))
                                   : std::nullopt)
      .bind(5, state.survey_invited)
      .bind(6, state.account_id.empty() ? std::optional<std::string>()
                                        : std::optional<std::string>(state.account_id))
      .bind(7, state.resume_cursor).run();
  tx.commit();
}

std::vector<SyncState> Datastore::list_sync_states() const {
  std::lock_guard lock(mu_);
  Statement q(db_, std::string("SELECT ") + kSyncColumns + " FROM sync_state ORDER BY driver_id");
  std::vector<SyncState> out;
  while (q.step()) out.push_back(read_sync(q));
  return out;
}

std::optional<std::string> Datastore::driver_for_account(std::string const& account_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT driver_id FROM sync_state WHERE account_id = ?");
  if (!q.bind(1, account_id).step()) return std::nullopt;
  return q.text(0);
}

bool Datastore::mark_event_processed(std::string const& event_id,
                                     std::string const& driver_id) {
  std::lock_guard lock(mu_);
  Statement q(db_, "INSERT OR IGNORE INTO processed_events(event_id, driver_id) VALUES (?,?)");
  q.bind(1, event_id).bind(2, driver_id).run();
  return sqlite3_changes(db_) == 1;
}

bool Datastore::event_processed(std::string const& event_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT 1 FROM processed_events WHERE event_id = ?");
  return q.bind(1, event_id).step();
}

// -- survey -------------------------------------------------------------------

bool Datastore::insert_invite(InviteRecord const& invite) {
  std::lock_guard lock(mu_);
  Tx tx(db_);
  Statement t(db_, "SELECT 1 FROM tombstones WHERE driver_id = ?");
  if (t.bind(1, invite.driver_id).step()) {
    throw Error(ErrorCode::gone, "driver has been deleted");
  }
  Statement q(db_,
              "INSERT OR IGNORE INTO survey_invites(token_hash, driver_id, issued_at, consumed) "
              "VALUES (?,?,?,0)");
  q.bind(1, invite.token_hash).bind(2, invite.driver_id).bind(3, secs(invite.issued_at)).run();
  bool const inserted = sqlite3_changes(db_) == 1;
  tx.commit();
  return inserted;
}

std::optional<InviteRecord> Datastore::find_invite(std::string const& token_hash) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT token_hash, driver_id, issued_at, consumed FROM survey_invites "
              "WHERE token_hash = ?");
  if (!q.bind(1, token_hash).step()) return std::nullopt;
  return InviteRecord{q.text(0), q.text(1), from_secs(q.integer(2)), q.integer(3) != 0};
}

bool Datastore::has_invite(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT 1 FROM survey_invites WHERE driver_id = ?");
  return q.bind(1, driver_id).step();
}

void Datastore::revoke_invite(std::string const& token_hash) {
  std::lock_guard lock(mu_);
  Statement q(db_, "DELETE FROM survey_invites WHERE token_hash = ? AND consumed = 0");
  q.bind(1, token_hash).run();
}

ConsumeOutcome Datastore::consume_invite_and_store(std::string const& token_hash,
                                                   SurveyResponse const& response) {
  std::lock_guard lock(mu_);
  Tx tx(db_);
  Statement find(db_, "SELECT driver_id, consumed FROM survey_invites WHERE token_hash = ?");
  if (!find.bind(1, token_hash).step()) return ConsumeOutcome::unknown_token;
  if (find.text(0) != response.driver_id) {
    throw Error(ErrorCode::contract_violation, "response driver does not match invite");
  }
  Statement consume(db_,
                    "UPDATE survey_invites SET consumed = 1 WHERE token_hash = ? AND consumed = 0");
  consume.bind(1, token_hash).run();
  if (sqlite3_changes(db_) != 1) return ConsumeOutcome::already_consumed;
  Statement exists(db_, "SELECT 1 FROM survey_responses WHERE driver_id = ?");
  if (exists.bind(1, response.driver_id).step()) return ConsumeOutcome::already_consumed;
  Statement insert(db_,
                   "INSERT INTO survey_responses(driver_id, estimated_take_rate_pct, "
                   "fair_take_rate_pct, factors_text, submitted_at) VALUES (?,?,?,?,?)");
  insert.bind(1, response.driver_id).bind(2, response.estimated_take_rate_pct)
      .bind(3, response.fair_take_rate_pct).bind(4, response.factors_text)
      .bind(5, secs(response.submitted_at)).run();
  tx.commit();
  return ConsumeOutcome::stored;
}

namespace {

SurveyResponse read_response(Statement const& q) {
  return SurveyResponse{q.text(0), q.real(1), q.real(2), q.text(3), from_secs(q.integer(4))};
}

}  // namespace

std::optional<SurveyResponse> Datastore::get_response(std::string const& driver_id) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT driver_id, estimated_take_rate_pct, fair_take_rate_pct, factors_text, "
              "submitted_at FROM survey_responses WHERE driver_id = ?");
  if (!q.bind(1, driver_id).step()) return std::nullopt;
  return read_response(q);
}

std::vector<SurveyResponse> Datastore::all_responses() const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT driver_id, estimated_take_rate_pct, fair_take_rate_pct, factors_text, "
              "submitted_at FROM survey_responses ORDER BY driver_id");
  std::vector<SurveyResponse> out;
  while (q.step()) out.push_back(read_response(q));
  return out;
}

// -- deletion -----------------------------------------------------------------

DeletionReceipt Datastore::delete_driver(std::string const& driver_id) {
  std::lock_guard lock(mu_);
  DeletionReceipt receipt;
  receipt.driver_id = driver_id;
  {
    Statement t(db_, "SELECT deleted_at FROM tombstones WHERE driver_id = ?");
    if (t.bind(1, driver_id).step()) {
      receipt.deleted_at = from_secs(t.integer(0));
      return receipt;
    }
    Statement e(db_,
                "SELECT 1 FROM pii.drivers WHERE driver_id = ?1 UNION ALL "
                "SELECT 1 FROM driver_affiliations WHERE driver_id = ?1");
    if (!e.bind(1, driver_id).step()) {
      throw Error(ErrorCode::not_found, "unknown driver " + driver_id);
    }
  }
  receipt.deleted_at = now();
  Tx tx(db_);
  auto purge = [&](char const* sql) {
    Statement s(db_, sql);
    s.bind(1, driver_id).run();
    return sqlite3_changes(db_);
  };
  receipt.pii = purge("DELETE FROM pii.drivers WHERE driver_id = ?1");
  receipt.activities = purge("DELETE FROM activities WHERE driver_id = ?1");
  receipt.surveys = purge("DELETE FROM survey_responses WHERE driver_id = ?1");
  receipt.sync = purge("DELETE FROM sync_state WHERE driver_id = ?1");
  receipt.other += purge("DELETE FROM survey_invites WHERE driver_id = ?1");
  receipt.other += purge("DELETE FROM access_tokens WHERE driver_id = ?1");
  receipt.other += purge("DELETE FROM processed_events WHERE driver_id = ?1");
  receipt.other += purge("DELETE FROM driver_affiliations WHERE driver_id = ?1");
  receipt.other += purge(
      "DELETE FROM audit_log WHERE target_driver_id = ?1 OR instr(actor, ?1) > 0");
  Statement tomb(db_, "INSERT INTO tombstones(driver_id, deleted_at) VALUES (?,?)");
  tomb.bind(1, driver_id).bind(2, secs(receipt.deleted_at)).run();
  tx.commit();
  return receipt;
}

// -- audit & verification -----------------------------------------------------

void Datastore::audit(std::string const& actor, std::string const& action,
                      std::string const& target_driver_id) {
  std::lock_guard lock(mu_);
  Statement q(db_, "INSERT INTO audit_log(at, actor, action, target_driver_id) VALUES (?,?,?,?)");
  q.bind(1, secs(now())).bind(2, actor).bind(3, action).bind(4, target_driver_id).run();
}

std::vector<AuditEntry> Datastore::audit_log() const {
  std::lock_guard lock(mu_);
  Statement q(db_, "SELECT at, actor, action, target_driver_id FROM audit_log ORDER BY id");
  std::vector<AuditEntry> out;
  while (q.step()) out.push_back({from_secs(q.integer(0)), q.text(1), q.text(2), q.text(3)});
  return out;
}

std::map<std::string, int> Datastore::scan_for_value(std::string const& value) const {
  std::lock_guard lock(mu_);
  std::map<std::string, int> out;
  for (char const* schema : {"main", "pii"}) {
    std::vector<std::string> tables;
    {
      Statement t(db_, std::string("SELECT name FROM ") + schema +
                           ".sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%'");
      while (t.step()) tables.push_back(t.text(0));
    }
    for (auto const& table : tables) {
      std::vector<std::string> columns;
      {
        Statement c(db_, std::string("PRAGMA ") + schema + ".table_info(" + table + ")");
        while (c.step()) columns.push_back(c.text(1));
      }
      std::string sql = std::string("SELECT count(*) FROM ") + schema + "." + table + " WHERE 0";
      for (auto const& col : columns) sql += " OR instr(CAST(\"" + col + "\" AS TEXT), ?1) > 0";
      Statement s(db_, sql);
      s.bind(1, value).step();
      if (int const n = static_cast<int>(s.integer(0)); n > 0) {
        out[std::string(schema) + "." + table] = n;
      }
    }
  }
  return out;
}

std::string Datastore::state_digest() const {
  static constexpr char const* kQueries[] = {
      "SELECT 'a|' || activity_id || '|' || driver_id || '|' || digest FROM activities "
      "ORDER BY activity_id",
      "SELECT 's|' || driver_id || '|' || phase || '|' || activities_ingested || '|' || "
      "survey_invited || '|' || coalesce(account_id, '') FROM sync_state ORDER BY driver_id",
      "SELECT 'i|' || driver_id || '|' || consumed FROM survey_invites ORDER BY driver_id",
      "SELECT 'r|' || driver_id || '|' || estimated_take_rate_pct || '|' || "
      "fair_take_rate_pct || '|' || factors_text FROM survey_responses ORDER BY driver_id",
      "SELECT 't|' || driver_id FROM tombstones ORDER BY driver_id",
  };
  std::lock_guard lock(mu_);
  std::string all;
  for (char const* sql : kQueries) {
    Statement q(db_, sql);
    while (q.step()) {
      all += q.text(0);
      all += '\n';
    }
  }
  return crypto::sha256_hex(all);
}

// -- exports -------------------------------------------------------------------

void Datastore::export_ndjson(std::ostream& out) const {
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT a.payload, d.affiliation_id FROM activities a LEFT JOIN "
              "driver_affiliations d ON a.driver_id = d.driver_id "
              "ORDER BY a.start_time IS NULL, a.start_time, a.activity_id");
  while (q.step()) {
    json row = json::parse(q.text(0));
    row["affiliation_id"] = q.is_null(1) ? json(nullptr) : json(q.text(1));
    out << row.dump() << '\n';
  }
}

void Datastore::export_csv(std::ostream& out) const {
  out << "activity_id,driver_id,affiliation_id,activity_type,status,start_time,end_time,"
         "Distance (miles),Duration (minutes),Ride Price ($),Fees ($),Base Pay ($),"
         "Tips ($),Bonus ($),surge_flag,start_zip,end_zip\n";
  std::lock_guard lock(mu_);
  Statement q(db_,
              "SELECT a.payload, d.affiliation_id FROM activities a LEFT JOIN "
              "driver_affiliations d ON a.driver_id = d.driver_id "
              "ORDER BY a.start_time IS NULL, a.start_time, a.activity_id");
  while (q.step()) {
    RideActivity const a = activity_from_json(json::parse(q.text(0)));
    auto money = [](std::optional<Cents> const& c) { return c ? c->to_string() : ""; };
    auto dec = [](std::optional<double> const& d) { return d ? fixed(*d, 2) : ""; };
    auto ts = [](std::optional<Timestamp> const& t) { return t ? format_timestamp(*t) : ""; };
    out << csv_field(a.activity_id) << ',' << csv_field(a.driver_id) << ','
        << csv_field(q.is_null(1) ? "" : q.text(1)) << ',' << to_string(a.activity_type) << ','
        << to_string(a.status) << ',' << ts(a.start_time) << ',' << ts(a.end_time) << ','
        << dec(a.distance_miles) << ',' << dec(a.duration_minutes) << ','
        << money(a.rider_price_usd) << ',' << money(a.platform_fees_usd) << ','
        << money(a.base_pay_usd) << ',' << money(a.tips_usd) << ',' << money(a.bonus_usd)
        << ',' << (a.surge_flag ? "true" : "false") << ','
        << csv_field(a.start_zip.value_or("")) << ',' << csv_field(a.end_zip.value_or(""))
        << '\n';
  }
}

}  // namespace fairfare::store
