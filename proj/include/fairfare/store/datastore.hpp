#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fairfare/ride_activity.hpp"
#include "fairfare/survey_response.hpp"
#include "fairfare/timeutil.hpp"

struct sqlite3;

namespace fairfare::store {

struct ConsentRecord {
  bool consented = false;
  std::string consent_version;
  Timestamp consented_at;
};

// PII. Lives only in the isolated profile database.
struct DriverProfile {
  std::string driver_id;
  std::string display_name;
  std::string phone;  // E.164
  std::optional<std::string> affiliation_id;
  ConsentRecord consent;
  Timestamp created_at;
};

struct Affiliation {
  std::string affiliation_id;
  std::string name;
  std::optional<std::string> region_tag;
};

enum class Phase { linked, backfilling, synced, refreshing, unlinked };

std::string_view to_string(Phase phase);
Phase parse_phase(std::string_view text);
// linked->backfilling->synced<->refreshing, any->unlinked, and a phase to
// itself.
bool transition_allowed(Phase from, Phase to);

struct SyncState {
  std::string driver_id;
  Phase phase = Phase::linked;
  std::int64_t activities_ingested = 0;
  std::optional<Timestamp> last_event_at;
  bool survey_invited = false;
  bool tombstoned = false;
  std::string account_id;
  // Cursor of the last provider page read; empty means the start.
  std::string resume_cursor;
};

struct AccessToken {
  enum class Scope { driver, admin };

  std::string token_id;
  Scope scope = Scope::driver;
  std::string driver_id;  // driver scope only
  Timestamp issued_at;
  Timestamp expires_at;

  bool is_admin() const { return scope == Scope::admin; }
};

struct ActivityQuery {
  std::optional<std::string> driver_id;
  std::optional<std::vector<std::string>> affiliation_ids;
  std::optional<Timestamp> from;
  std::optional<Timestamp> to;
  std::size_t offset = 0;
  std::size_t limit = 0;  // 0: everything
};

struct DeletionReceipt {
  std::string driver_id;
  Timestamp deleted_at;
  int pii = 0;
  int activities = 0;
  int surveys = 0;
  int sync = 0;
  // Invites, tokens, processed-event markers, affiliation links, audit rows.
  int other = 0;
};

struct AuditEntry {
  Timestamp at;
  std::string actor;
  std::string action;
  std::string target_driver_id;
};

struct InviteRecord {
  std::string token_hash;
  std::string driver_id;
  Timestamp issued_at;
  bool consumed = false;
};

enum class ConsumeOutcome { stored, already_consumed, unknown_token };

// Embedded transactional store. Trip data, sync state and survey data live
// in the analytics database; names and phone numbers live in a separately
// attached profile database that no export or analytics path reads.
//
// One connection guarded by a mutex: every write is serialized, which also
// serializes writes per driver and keeps deletion exclusive.
class Datastore {
 public:
  struct Options {
    // Directory holding analytics.db and profiles.db; empty for in-memory.
    std::filesystem::path data_dir;
    Clock clock = system_now;
    std::chrono::seconds driver_token_ttl = std::chrono::hours(24 * 30);
    // Hex source for driver and affiliation ids. Replaceable so two stores
    // fed the same inputs can be compared digest for digest; bearer secrets
    // always come from the system generator.
    std::function<std::string(std::size_t bytes)> id_hex;
  };

  explicit Datastore(Options options);
  ~Datastore();
  Datastore(Datastore const&) = delete;
  Datastore& operator=(Datastore const&) = delete;

  Timestamp now() const { return options_.clock(); }
  std::string new_id(std::size_t bytes) const { return options_.id_hex(bytes); }

  // -- affiliations ------------------------------------------------------
  // Names are unique ignoring case: conflict otherwise.
  Affiliation create_affiliation(std::string const& name,
                                 std::optional<std::string> region_tag = {});
  std::vector<Affiliation> list_affiliations() const;
  std::optional<Affiliation> find_affiliation(std::string const& affiliation_id) const;
  std::optional<Affiliation> find_affiliation_by_name(std::string const& name) const;

  // -- drivers ------------------------------------------------------------
  // Refuses (validation) unless consent.consented is true with a version.
  DriverProfile create_driver(std::string const& display_name,
                              std::string const& phone,
                              std::optional<std::string> const& affiliation_id,
                              ConsentRecord const& consent);
  std::optional<DriverProfile> get_profile(std::string const& driver_id) const;
  bool driver_exists(std::string const& driver_id) const;
  bool is_tombstoned(std::string const& driver_id) const;
  std::vector<std::string> list_driver_ids(std::size_t offset = 0,
                                           std::size_t limit = 0) const;
  // driver_id -> affiliation_id, from the analytics-side link table.
  std::map<std::string, std::optional<std::string>> driver_affiliations() const;

  // -- tokens ---------------------------------------------------------------
  // Returns the bearer secret; only its hash is stored.
  std::string issue_driver_token(std::string const& driver_id);
  // Test hook: a token with an explicit expiry.
  std::string issue_driver_token(std::string const& driver_id, Timestamp expires_at);
  // Resolves a bearer secret. The admin token is recognised by comparing
  // against `admin_key` and is never stored or issued. Expired tokens throw
  // unauthorized; unknown ones yield nullopt.
  std::optional<AccessToken> authenticate(std::string const& bearer,
                                          std::string const& admin_key) const;

  // -- activities -----------------------------------------------------------
  // Upserts keyed by activity_id, last writer wins when the payload digest
  // changes. Atomic: one invalid record rejects the batch (bad_request).
  // Refused (forbidden) without consent on file or for a tombstoned driver.
  // Returns rows inserted or changed.
  int put_activities(std::string const& driver_id,
                     std::span<RideActivity const> activities);

  // Row-level security: a driver token only ever sees its own rows. Asking
  // for another driver yields nothing and an audit entry.
  std::vector<RideActivity> get_activities(AccessToken const& token,
                                           ActivityQuery const& query);

  std::int64_t count_activities(std::string const& driver_id) const;
  std::int64_t count_completed_rideshare(std::string const& driver_id) const;
  // Every stored activity, for snapshotting. Internal path, no token.
  std::vector<RideActivity> all_activities() const;

  // -- sync state -----------------------------------------------------------
  std::optional<SyncState> get_sync_state(std::string const& driver_id) const;
  // Enforces transition_allowed against the stored phase (conflict).
  void put_sync_state(SyncState const& state);
  std::vector<SyncState> list_sync_states() const;
  std::optional<std::string> driver_for_account(std::string const& account_id) const;
  // False when the event was already recorded.
  bool mark_event_processed(std::string const& event_id, std::string const& driver_id);
  bool event_processed(std::string const& event_id) const;

  // -- survey ---------------------------------------------------------------
  // False when the driver already has an invite.
  bool insert_invite(InviteRecord const& invite);
  std::optional<InviteRecord> find_invite(std::string const& token_hash) const;
  bool has_invite(std::string const& driver_id) const;
  // Drops an unconsumed invite whose message could not be sent.
  void revoke_invite(std::string const& token_hash);
  // Consumes the token and stores the response in one transaction.
  ConsumeOutcome consume_invite_and_store(std::string const& token_hash,
                                          SurveyResponse const& response);
  std::optional<SurveyResponse> get_response(std::string const& driver_id) const;
  std::vector<SurveyResponse> all_responses() const;

  // -- deletion -------------------------------------------------------------
  // Synchronous hard delete of every row about the driver, keeping a
  // tombstone. not_found for a driver that never existed; a second delete
  // returns a receipt of zeros.
  DeletionReceipt delete_driver(std::string const& driver_id);

  // -- audit & verification -------------------------------------------------
  void audit(std::string const& actor, std::string const& action,
             std::string const& target_driver_id);
  std::vector<AuditEntry> audit_log() const;
  // table -> rows in which any column equals `value`, across both databases.
  std::map<std::string, int> scan_for_value(std::string const& value) const;
  // Digest over activities, sync states, invites, responses and tombstones.
  std::string state_digest() const;

  // -- exports --------------------------------------------------------------
  // One JSON object per activity, with the driver's affiliation_id. No PII.
  void export_ndjson(std::ostream& out) const;
  // Per-ride rows with the summary-table column vocabulary.
  void export_csv(std::ostream& out) const;

 private:
  struct Tx;
  void exec(char const* sql) const;
  void ensure_schema();

  Options options_;
  sqlite3* db_ = nullptr;
  mutable std::mutex mu_;
};

}  // namespace fairfare::store
