#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/provider/generator.hpp"
#include "fairfare/ride_activity.hpp"
#include "fairfare/timeutil.hpp"

namespace fairfare::provider {

inline constexpr char kSignatureHeader[] = "X-Provider-Signature";

struct ProviderAccount {
  std::string account_id;
  std::string driver_ref;
  Timestamp connected_at;
  std::uint64_t generator_seed = 0;
};

nlohmann::json to_json(ProviderAccount const& account);
ProviderAccount account_from_json(nlohmann::json const& j);

enum class EventType { account_connected, gigs_added, gigs_updated, account_removed };

std::string_view to_string(EventType type);
EventType parse_event_type(std::string_view text);

struct WebhookEvent {
  std::string event_id;
  EventType event_type = EventType::gigs_added;
  std::string account_id;
  std::vector<RideActivity> payload;
};

nlohmann::json to_json(WebhookEvent const& event);
// Throws bad_request with a diagnostic on malformed input.
WebhookEvent event_from_json(nlohmann::json const& j);

// Hex HMAC-SHA256 of the raw body.
std::string sign_body(std::string const& secret, std::string const& body);

struct GigPage {
  std::vector<RideActivity> data;
  std::string next_cursor;  // empty at the end
};

// Delivers a signed body; returns the HTTP status, 0 when unreachable.
using WebhookTransport =
    std::function<int(std::string const& body, std::string const& signature)>;

WebhookTransport http_transport(std::string url);

enum class Schedule { staged, daily };

struct DeadLetter {
  std::string event_id;
  std::string account_id;
  std::string body;
  int attempts = 0;
  int last_status = 0;
};

struct EmissionReport {
  int events_emitted = 0;
  int delivered = 0;
  int dead_lettered = 0;
  int attempts = 0;
};

// Desk-scale stand-in for a payroll-data aggregator: deterministic
// synthetic gig histories, a paginated gigs listing, and signed webhook
// events with retry and a dead-letter list.
class ProviderMock {
 public:
  struct Options {
    std::string webhook_secret = "dev-webhook-secret";
    int staged_batches = 4;
    int max_attempts = 5;
    std::chrono::milliseconds backoff_base{50};
    Clock clock = system_now;
    std::function<void(std::chrono::milliseconds)> sleep;
  };

  ProviderMock();
  explicit ProviderMock(Options options);
  ~ProviderMock();

  // Rejects a duplicate driver_ref (conflict) or invalid params
  // (validation). Emits account.connected when an endpoint is registered.
  ProviderAccount create_account(std::string const& driver_ref,
                                 GeneratorParams const& params,
                                 std::uint64_t seed);

  // 1 <= limit <= 500. Unknown account: not_found; bad cursor: bad_request.
  GigPage list_gigs(std::string const& account_id, std::string const& cursor,
                    int limit) const;

  void register_webhook_endpoint(WebhookTransport transport);
  void register_webhook_endpoint(std::string const& url);

  // staged: the whole current history as K gigs.added batches.
  // daily: one gigs.added per simulated day not yet emitted.
  EmissionReport emit_events(std::string const& account_id, Schedule schedule);

  // Appends one simulated day of rides after the existing history.
  std::vector<RideActivity> simulate_day(std::string const& account_id, int n_rides);

  // Changes one gig's tip (rider price follows) and emits gigs.updated.
  RideActivity update_gig_tips(std::string const& account_id,
                               std::string const& activity_id, Cents tips);

  // Emits account.removed; the account then emits nothing further.
  void remove_account(std::string const& account_id);

  std::optional<ProviderAccount> find_account(std::string const& account_id) const;
  std::optional<ProviderAccount> find_by_driver_ref(std::string const& driver_ref) const;
  std::vector<ProviderAccount> accounts() const;
  std::size_t history_size(std::string const& account_id) const;
  std::string history_digest(std::string const& account_id) const;
  std::vector<DeadLetter> dead_letters() const;

  // Account specs, simulated days and edits; histories are regenerated.
  nlohmann::json save_state() const;
  void load_state(nlohmann::json const& state);

 private:
  struct Account;
  struct PendingEvent {
    std::string event_id;
    std::string account_id;
    std::string body;
  };

  Account& account_locked(std::string const& account_id);
  Account const& account_locked(std::string const& account_id) const;
  PendingEvent make_event_locked(Account& account, EventType type,
                                 std::vector<RideActivity> payload);
  EmissionReport deliver(std::vector<PendingEvent> const& events);
  std::shared_ptr<std::mutex> emission_lock(std::string const& account_id);

  Options options_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Account>> accounts_;
  std::map<std::string, std::string> by_driver_ref_;
  std::map<std::string, std::shared_ptr<std::mutex>> emission_locks_;
  WebhookTransport transport_;
  std::vector<DeadLetter> dead_letters_;
};

}  // namespace fairfare::provider
