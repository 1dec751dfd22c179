#include "fairfare/ingest/ingestor.hpp"

#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"
#include "fairfare/provider/provider_mock.hpp"

namespace fairfare::ingest {

using store::Phase;
using store::SyncState;

Ingestor::Ingestor(store::Datastore& store, provider::ProviderClient& provider,
                   Options options, InviteFn invite)
    : store_(store), provider_(provider), options_(std::move(options)), invite_(std::move(invite)) {}

std::shared_ptr<std::mutex> Ingestor::driver_lock(std::string const& driver_id) {
  std::lock_guard lock(locks_mu_);
  auto& slot = locks_[driver_id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

void Ingestor::set_phase(SyncState& state, Phase phase) {
  state.phase = phase;
  state.activities_ingested = store_.count_activities(state.driver_id);
  store_.put_sync_state(state);
}

WebhookResult Ingestor::handle_webhook(std::string const& body,
                                       std::optional<std::string> const& signature) {
  if (!signature || options_.webhook_secret.empty() ||
      !crypto::constant_time_equal(*signature,
                                   provider::sign_body(options_.webhook_secret, body))) {
    return {401, "rejected", 0, "webhook signature does not verify"};
  }
  provider::WebhookEvent event;
  try {
    event = provider::event_from_json(nlohmann::json::parse(body));
  } catch (nlohmann::json::exception const& e) {
    return {400, "rejected", 0, std::string("body is not JSON: ") + e.what()};
  } catch (Error const& e) {
    return {400, "rejected", 0, e.what()};
  }

  auto const driver = store_.driver_for_account(event.account_id);
  if (!driver) {
    // Includes account.connected racing the link that created the account.
    return {200, "ignored_unknown_account", 0, ""};
  }
  auto lock_slot = driver_lock(*driver);
  std::lock_guard guard(*lock_slot);

  auto state = store_.get_sync_state(*driver);
  if (!state || state->tombstoned) return {200, "discarded_tombstoned", 0, ""};
  if (store_.event_processed(event.event_id)) return {200, "duplicate", 0, ""};
  if (state->phase == Phase::unlinked) {
    store_.mark_event_processed(event.event_id, *driver);
    return {200, "discarded_unlinked", 0, ""};
  }

  WebhookResult result{200, "processed", 0, ""};
  switch (event.event_type) {
    case provider::EventType::gigs_added:
    case provider::EventType::gigs_updated: {
      // The account binding decides ownership, not the payload.
      for (auto& a : event.payload) a.driver_id = *driver;
      try {
        result.rows_changed = store_.put_activities(*driver, event.payload);
      } catch (Error const& e) {
        if (e.code() == ErrorCode::bad_request || e.code() == ErrorCode::conflict) {
          return {400, "rejected", 0, e.what()};
        }
        throw;
      }
      break;
    }
    case provider::EventType::account_removed:
      state->phase = Phase::unlinked;
      break;
    case provider::EventType::account_connected:
      break;
  }
  state->activities_ingested = store_.count_activities(*driver);
  state->last_event_at = store_.now();
  store_.put_sync_state(*state);
  store_.mark_event_processed(event.event_id, *driver);
  trigger_locked(*driver);
  return result;
}

SyncState Ingestor::link_driver(std::string const& driver_id, nlohmann::json const& params,
                                std::uint64_t seed) {
  if (store_.is_tombstoned(driver_id)) throw Error(ErrorCode::gone, "driver has been deleted");
  if (!store_.driver_exists(driver_id)) throw Error(ErrorCode::not_found, "unknown driver");
  auto lock_slot = driver_lock(driver_id);
  std::lock_guard guard(*lock_slot);
  if (store_.get_sync_state(driver_id)) {
    throw Error(ErrorCode::conflict, "driver already has a linked account");
  }
  // conflict here means the provider already holds an account for this
  // driver from an attempt that was never recorded; surfaced as is.
  auto const account = provider_.create_account(driver_id, params, seed);
  SyncState state;
  state.driver_id = driver_id;
  state.phase = Phase::linked;
  state.account_id = account.account_id;
  state.last_event_at = store_.now();
  store_.put_sync_state(state);
  return state;
}

SyncState Ingestor::bind_driver(std::string const& driver_id, std::string const& account_id) {
  if (store_.is_tombstoned(driver_id)) throw Error(ErrorCode::gone, "driver has been deleted");
  if (!store_.driver_exists(driver_id)) throw Error(ErrorCode::not_found, "unknown driver");
  auto lock_slot = driver_lock(driver_id);
  std::lock_guard guard(*lock_slot);
  if (store_.get_sync_state(driver_id)) {
    throw Error(ErrorCode::conflict, "driver already has a linked account");
  }
  if (!provider_.get_account(account_id)) {
    throw Error(ErrorCode::validation, "provider has no account " + account_id);
  }
  if (store_.driver_for_account(account_id)) {
    throw Error(ErrorCode::conflict, "account is linked to another driver");
  }
  SyncState state;
  state.driver_id = driver_id;
  state.phase = Phase::linked;
  state.account_id = account_id;
  state.last_event_at = store_.now();
  store_.put_sync_state(state);
  return state;
}

void Ingestor::begin_backfill(std::string const& driver_id) {
  auto lock_slot = driver_lock(driver_id);
  std::lock_guard guard(*lock_slot);
  auto state = store_.get_sync_state(driver_id);
  if (!state) throw Error(ErrorCode::not_found, "driver is not linked");
  if (state->phase == Phase::linked) set_phase(*state, Phase::backfilling);
}

BackfillResult Ingestor::run_backfill(std::string const& driver_id) {
  auto lock_slot = driver_lock(driver_id);
  std::lock_guard guard(*lock_slot);
  return backfill_locked(driver_id);
}

BackfillResult Ingestor::backfill_locked(std::string const& driver_id) {
  auto state = store_.get_sync_state(driver_id);
  if (!state) throw Error(ErrorCode::not_found, "driver is not linked");
  if (state->tombstoned) throw Error(ErrorCode::gone, "driver has been deleted");
  BackfillResult result;
  if (state->phase != Phase::linked && state->phase != Phase::backfilling) {
    result.complete = true;
    result.ingested = store_.count_activities(driver_id);
    return result;
  }
  if (state->phase == Phase::linked) set_phase(*state, Phase::backfilling);

  std::string cursor = state->resume_cursor;
  try {
    while (true) {
      auto page = provider_.list_gigs(state->account_id, cursor, options_.page_limit);
      for (auto& a : page.data) a.driver_id = driver_id;
      store_.put_activities(driver_id, page.data);
      ++result.pages;
      // Remember the page just stored; a resume re-reads it harmlessly.
      state->resume_cursor = cursor;
      state->activities_ingested = store_.count_activities(driver_id);
      store_.put_sync_state(*state);
      if (page.next_cursor.empty()) break;
      cursor = page.next_cursor;
    }
  } catch (Error const& e) {
    if (e.code() == ErrorCode::gone || e.code() == ErrorCode::forbidden) throw;
    result.error = e.what();
    result.ingested = store_.count_activities(driver_id);
    return result;
  }
  state->last_event_at = store_.now();
  set_phase(*state, Phase::synced);
  result.complete = true;
  result.ingested = state->activities_ingested;
  trigger_locked(driver_id);
  return result;
}

bool Ingestor::evaluate_survey_trigger(std::string const& driver_id) {
  auto lock_slot = driver_lock(driver_id);
  std::lock_guard guard(*lock_slot);
  return trigger_locked(driver_id);
}

bool Ingestor::trigger_locked(std::string const& driver_id) {
  auto state = store_.get_sync_state(driver_id);
  if (!state || state->tombstoned || state->survey_invited) return false;
  if (state->phase != Phase::synced) return false;
  if (store_.count_completed_rideshare(driver_id) < options_.survey_threshold) return false;
  if (!invite_) return false;
  bool sent = false;
  try {
    sent = invite_(driver_id);
  } catch (Error const&) {
    // Latch stays open; the next event or refresh tries again.
    return false;
  }
  state->survey_invited = true;
  store_.put_sync_state(*state);
  return sent;
}

RefreshDelta Ingestor::refresh_driver(std::string const& driver_id) {
  auto lock_slot = driver_lock(driver_id);
  std::lock_guard guard(*lock_slot);
  return refresh_locked(driver_id);
}

RefreshDelta Ingestor::refresh_locked(std::string const& driver_id) {
  RefreshDelta delta;
  delta.driver_id = driver_id;
  auto state = store_.get_sync_state(driver_id);
  if (!state || state->tombstoned) {
    delta.ok = false;
    delta.error = "driver is not linked";
    return delta;
  }
  if (state->phase == Phase::linked || state->phase == Phase::backfilling) {
    auto const before = store_.count_activities(driver_id);
    auto const r = backfill_locked(driver_id);
    delta.activities = r.ingested;
    delta.rows_changed = static_cast<int>(r.ingested - before);
    delta.ok = r.complete;
    delta.retryable = !r.complete;
    delta.error = r.error;
    return delta;
  }
  if (state->phase == Phase::unlinked) {
    delta.activities = store_.count_activities(driver_id);
    return delta;
  }
  if (state->phase == Phase::synced) set_phase(*state, Phase::refreshing);
  std::string cursor = state->resume_cursor;
  try {
    while (true) {
      auto page = provider_.list_gigs(state->account_id, cursor, options_.page_limit);
      for (auto& a : page.data) a.driver_id = driver_id;
      delta.rows_changed += store_.put_activities(driver_id, page.data);
      state->resume_cursor = cursor;
      if (page.next_cursor.empty()) break;
      cursor = page.next_cursor;
    }
  } catch (Error const& e) {
    if (e.code() == ErrorCode::gone || e.code() == ErrorCode::forbidden) throw;
    // Left in refreshing: the next tick retries this driver.
    state->activities_ingested = store_.count_activities(driver_id);
    store_.put_sync_state(*state);
    delta.ok = false;
    delta.retryable = true;
    delta.error = e.what();
    delta.activities = state->activities_ingested;
    return delta;
  }
  state->last_event_at = store_.now();
  set_phase(*state, Phase::synced);
  delta.activities = state->activities_ingested;
  trigger_locked(driver_id);
  return delta;
}

std::vector<RefreshDelta> Ingestor::daily_refresh() {
  std::vector<RefreshDelta> out;
  for (auto const& state : store_.list_sync_states()) {
    if (state.phase == Phase::unlinked) continue;
    try {
      out.push_back(refresh_driver(state.driver_id));
    } catch (std::exception const& e) {
      RefreshDelta d;
      d.driver_id = state.driver_id;
      d.ok = false;
      d.retryable = true;
      d.error = e.what();
      out.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace fairfare::ingest
