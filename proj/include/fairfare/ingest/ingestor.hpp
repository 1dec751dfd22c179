#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/provider/client.hpp"
#include "fairfare/store/datastore.hpp"

namespace fairfare::ingest {

// Issues the one survey invite for a driver. Returns false when the driver
// already had one; throws when the survey side failed.
using InviteFn = std::function<bool(std::string const& driver_id)>;

struct WebhookResult {
  int status = 200;
  // processed | duplicate | discarded_tombstoned | discarded_unlinked |
  // ignored_unknown_account | rejected
  std::string outcome;
  int rows_changed = 0;
  std::string message;
};

struct BackfillResult {
  std::int64_t ingested = 0;  // distinct activities stored for the driver
  int pages = 0;
  bool complete = false;
  std::string error;  // set when the provider failed mid-way
};

struct RefreshDelta {
  std::string driver_id;
  int rows_changed = 0;
  std::int64_t activities = 0;
  bool ok = true;
  bool retryable = false;
  std::string error;
};

class Ingestor {
 public:
  struct Options {
    std::string webhook_secret;
    // Completed rideshare rides needed before the survey goes out.
    std::int64_t survey_threshold = 10;
    int page_limit = 100;
  };

  Ingestor(store::Datastore& store, provider::ProviderClient& provider, Options options,
           InviteFn invite);

  // Signature is checked before the body is parsed. Statuses: 401 bad
  // signature, 400 malformed, 200 otherwise (including discards).
  WebhookResult handle_webhook(std::string const& body,
                               std::optional<std::string> const& signature);

  // Creates (or binds to) the provider account and records phase linked.
  // not_found for an unknown driver, gone when deleted, conflict on a
  // second link.
  store::SyncState link_driver(std::string const& driver_id, nlohmann::json const& params,
                               std::uint64_t seed);

  // Binds an account that already exists at the provider (a seeded one).
  // validation when the provider does not know it, conflict when another
  // driver holds it.
  store::SyncState bind_driver(std::string const& driver_id, std::string const& account_id);

  // linked -> backfilling, so the phase is visible before the job runs.
  void begin_backfill(std::string const& driver_id);

  // Pages the provider to exhaustion starting from the saved cursor, so an
  // interrupted backfill resumes where it stopped. Ends in phase synced.
  BackfillResult run_backfill(std::string const& driver_id);

  // Returns true when this call sent the invite.
  bool evaluate_survey_trigger(std::string const& driver_id);

  RefreshDelta refresh_driver(std::string const& driver_id);
  // Every synced (or previously failed) driver; failures stay per driver.
  std::vector<RefreshDelta> daily_refresh();

 private:
  std::shared_ptr<std::mutex> driver_lock(std::string const& driver_id);
  BackfillResult backfill_locked(std::string const& driver_id);
  RefreshDelta refresh_locked(std::string const& driver_id);
  bool trigger_locked(std::string const& driver_id);
  void set_phase(store::SyncState& state, store::Phase phase);

  store::Datastore& store_;
  provider::ProviderClient& provider_;
  Options options_;
  InviteFn invite_;
  std::mutex locks_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

}  // namespace fairfare::ingest
