#include "fairfare/provider/provider_mock.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"
#include "fairfare/http.hpp"

namespace fairfare::provider {

using nlohmann::json;

json to_json(ProviderAccount const& a) {
  return json{{"account_id", a.account_id},
              {"driver_ref", a.driver_ref},
              {"connected_at", format_timestamp(a.connected_at)},
              {"generator_seed", a.generator_seed}};
}

ProviderAccount account_from_json(json const& j) {
  try {
    ProviderAccount a;
    a.account_id = j.at("account_id").get<std::string>();
    a.driver_ref = j.at("driver_ref").get<std::string>();
    a.connected_at = parse_timestamp(j.at("connected_at").get<std::string>());
    a.generator_seed = j.at("generator_seed").get<std::uint64_t>();
    return a;
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request, std::string("malformed account: ") + e.what());
  }
}

std::string_view to_string(EventType type) {
  switch (type) {
    case EventType::account_connected: return "account.connected";
    case EventType::gigs_added: return "gigs.added";
    case EventType::gigs_updated: return "gigs.updated";
    case EventType::account_removed: return "account.removed";
  }
  return "";
}

EventType parse_event_type(std::string_view text) {
  if (text == "account.connected") return EventType::account_connected;
  if (text == "gigs.added") return EventType::gigs_added;
  if (text == "gigs.updated") return EventType::gigs_updated;
  if (text == "account.removed") return EventType::account_removed;
  throw Error(ErrorCode::bad_request, "unknown event_type: " + std::string(text));
}

json to_json(WebhookEvent const& e) {
  json payload = json::array();
  for (auto const& a : e.payload) payload.push_back(to_json(a));
  return json{{"event_id", e.event_id},
              {"event_type", to_string(e.event_type)},
              {"account_id", e.account_id},
              {"payload", std::move(payload)}};
}

WebhookEvent event_from_json(json const& j) {
  if (!j.is_object()) throw Error(ErrorCode::bad_request, "event is not an object");
  auto str = [&](char const* name) {
    auto it = j.find(name);
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
      throw Error(ErrorCode::bad_request, std::string("event.") + name + " missing");
    }
    return it->get<std::string>();
  };
  WebhookEvent e;
  e.event_id = str("event_id");
  e.event_type = parse_event_type(str("event_type"));
  e.account_id = str("account_id");
  auto it = j.find("payload");
  if (it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(ErrorCode::bad_request, "event.payload is not a list");
    for (std::size_t i = 0; i < it->size(); ++i) {
      try {
        e.payload.push_back(activity_from_json((*it)[i]));
      } catch (Error const& err) {
        throw Error(ErrorCode::bad_request,
                    "payload[" + std::to_string(i) + "]: " + err.what());
      }
    }
  }
  return e;
}

std::string sign_body(std::string const& secret, std::string const& body) {
  return crypto::hmac_sha256_hex(secret, body);
}

WebhookTransport http_transport(std::string url) {
  return [url = std::move(url)](std::string const& body, std::string const& signature) {
    return http::post(url, body, {{kSignatureHeader, signature}}).status;
  };
}

struct ProviderMock::Account {
  ProviderAccount info;
  GeneratorParams params;
  std::vector<RideActivity> history;
  std::vector<int> day_counts;
  int daily_emitted = 0;
  std::vector<std::pair<std::string, std::int64_t>> tip_edits;
  bool removed = false;
  std::uint64_t event_seq = 0;
};

namespace {

std::string cursor_check(std::string const& account_id, std::size_t offset) {
  return crypto::sha256_hex(account_id + ":" + std::to_string(offset)).substr(0, 8);
}

std::string encode_cursor(std::string const& account_id, std::size_t offset) {
  std::ostringstream out;
  out << "c1-" << std::hex << offset << "-" << cursor_check(account_id, offset);
  return out.str();
}

std::size_t decode_cursor(std::string const& account_id, std::string const& cursor) {
  if (cursor.empty()) return 0;
  auto const bad = [&] {
    return Error(ErrorCode::bad_request, "invalid cursor");
  };
  if (cursor.rfind("c1-", 0) != 0) throw bad();
  auto const dash = cursor.find('-', 3);
  if (dash == std::string::npos) throw bad();
  std::size_t offset = 0;
  try {
    std::size_t used = 0;
    offset = std::stoull(cursor.substr(3, dash - 3), &used, 16);
    if (used != dash - 3) throw bad();
  } catch (std::logic_error const&) {
    throw bad();
  }
  if (!crypto::constant_time_equal(cursor.substr(dash + 1),
                                   cursor_check(account_id, offset))) {
    throw bad();
  }
  return offset;
}

void apply_tips(RideActivity& a, Cents tips) {
  Cents const delta = tips - a.tips_usd.value_or(Cents(0));
  a.tips_usd = tips;
  if (a.rider_price_usd) a.rider_price_usd = *a.rider_price_usd + delta;
  a.source_payload_digest = compute_payload_digest(a);
}

}  // namespace

ProviderMock::ProviderMock() : ProviderMock(Options{}) {}

ProviderMock::ProviderMock(Options options) : options_(std::move(options)) {
  if (!options_.sleep) {
    options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.clock) options_.clock = system_now;
}

ProviderMock::~ProviderMock() = default;

ProviderMock::Account& ProviderMock::account_locked(std::string const& account_id) {
  auto it = accounts_.find(account_id);
  if (it == accounts_.end() || it->second->removed) {
    throw Error(ErrorCode::not_found, "unknown account " + account_id);
  }
  return *it->second;
}

ProviderMock::Account const& ProviderMock::account_locked(
    std::string const& account_id) const {
  return const_cast<ProviderMock*>(this)->account_locked(account_id);
}

std::shared_ptr<std::mutex> ProviderMock::emission_lock(std::string const& account_id) {
  std::lock_guard lock(mu_);
  auto& slot = emission_locks_[account_id];
  if (!slot) slot = std::make_shared<std::mutex>();
  return slot;
}

ProviderMock::PendingEvent ProviderMock::make_event_locked(
    Account& account, EventType type, std::vector<RideActivity> payload) {
  WebhookEvent e;
  e.event_id = "evt_" + crypto::sha256_hex(account.info.account_id + ":" +
                                           std::to_string(account.event_seq++))
                            .substr(0, 24);
  e.event_type = type;
  e.account_id = account.info.account_id;
  e.payload = std::move(payload);
  return PendingEvent{e.event_id, e.account_id, to_json(e).dump()};
}

EmissionReport ProviderMock::deliver(std::vector<PendingEvent> const& events) {
  WebhookTransport transport;
  {
    std::lock_guard lock(mu_);
    transport = transport_;
  }
  EmissionReport report;
  report.events_emitted = static_cast<int>(events.size());
  if (!transport) return report;
  for (PendingEvent const& e : events) {
    std::string const signature = sign_body(options_.webhook_secret, e.body);
    int status = 0;
    int attempt = 0;
    while (attempt < options_.max_attempts) {
      ++attempt;
      ++report.attempts;
      try {
        status = transport(e.body, signature);
      } catch (std::exception const&) {
        status = 0;
      }
      if (status >= 200 && status < 300) break;
      if (attempt < options_.max_attempts) {
        options_.sleep(options_.backoff_base * (1 << (attempt - 1)));
      }
    }
    if (status >= 200 && status < 300) {
      ++report.delivered;
    } else {
      ++report.dead_lettered;
      std::lock_guard lock(mu_);
      dead_letters_.push_back(DeadLetter{e.event_id, e.account_id, e.body, attempt, status});
    }
  }
  return report;
}

ProviderAccount ProviderMock::create_account(std::string const& driver_ref,
                                             GeneratorParams const& params,
                                             std::uint64_t seed) {
  if (driver_ref.empty()) throw Error(ErrorCode::validation, "driver_ref is empty");
  params.validate();
  auto account = std::make_unique<Account>();
  account->info.account_id =
      "acct_" + crypto::sha256_hex(driver_ref + ":" + std::to_string(seed)).substr(0, 16);
  account->info.driver_ref = driver_ref;
  account->info.connected_at = options_.clock();
  account->info.generator_seed = seed;
  account->params = params;
  account->history =
      generate_history(params, seed, account->info.account_id, driver_ref);
  ProviderAccount const info = account->info;
  auto lock_slot = emission_lock(info.account_id);
  std::lock_guard emit_guard(*lock_slot);
  std::vector<PendingEvent> events;
  {
    std::lock_guard lock(mu_);
    if (by_driver_ref_.contains(driver_ref)) {
      throw Error(ErrorCode::conflict, "driver_ref already has an account");
    }
    by_driver_ref_[driver_ref] = info.account_id;
    if (transport_) {
      events.push_back(make_event_locked(*account, EventType::account_connected, {}));
    }
    accounts_[info.account_id] = std::move(account);
  }
  deliver(events);
  return info;
}

GigPage ProviderMock::list_gigs(std::string const& account_id,
                                std::string const& cursor, int limit) const {
  if (limit < 1 || limit > 500) {
    throw Error(ErrorCode::bad_request, "limit must be within [1, 500]");
  }
  std::lock_guard lock(mu_);
  Account const& account = account_locked(account_id);
  std::size_t const offset = decode_cursor(account_id, cursor);
  if (offset > account.history.size()) throw Error(ErrorCode::bad_request, "invalid cursor");
  std::size_t const end =
      std::min(account.history.size(), offset + static_cast<std::size_t>(limit));
  GigPage page;
  page.data.assign(account.history.begin() + static_cast<std::ptrdiff_t>(offset),
                   account.history.begin() + static_cast<std::ptrdiff_t>(end));
  if (end < account.history.size()) page.next_cursor = encode_cursor(account_id, end);
  return page;
}

void ProviderMock::register_webhook_endpoint(WebhookTransport transport) {
  std::lock_guard lock(mu_);
  transport_ = std::move(transport);
}

void ProviderMock::register_webhook_endpoint(std::string const& url) {
  if (url.rfind("http://", 0) != 0) {
    throw Error(ErrorCode::validation, "webhook url must be http://");
  }
  register_webhook_endpoint(http_transport(url));
}

EmissionReport ProviderMock::emit_events(std::string const& account_id,
                                         Schedule schedule) {
  auto lock_slot = emission_lock(account_id);
  std::lock_guard emit_guard(*lock_slot);
  std::vector<PendingEvent> events;
  {
    std::lock_guard lock(mu_);
    auto it = accounts_.find(account_id);
    if (it == accounts_.end()) throw Error(ErrorCode::not_found, "unknown account " + account_id);
    Account& account = *it->second;
    if (account.removed) return EmissionReport{};
    if (!transport_) {
      throw Error(ErrorCode::contract_violation, "no webhook endpoint registered");
    }
    if (schedule == Schedule::staged) {
      std::size_t const n = account.history.size();
      std::size_t const k = static_cast<std::size_t>(std::max(1, options_.staged_batches));
      std::size_t const per = (n + k - 1) / k;
      for (std::size_t start = 0; start < n; start += per) {
        std::size_t const stop = std::min(n, start + per);
        events.push_back(make_event_locked(
            account, EventType::gigs_added,
            {account.history.begin() + static_cast<std::ptrdiff_t>(start),
             account.history.begin() + static_cast<std::ptrdiff_t>(stop)}));
      }
    } else {
      std::size_t simulated = 0;
      for (int c : account.day_counts) simulated += static_cast<std::size_t>(c);
      std::size_t offset = account.history.size() - simulated;
      for (std::size_t d = 0; d < account.day_counts.size(); ++d) {
        auto const count = static_cast<std::size_t>(account.day_counts[d]);
        if (static_cast<int>(d) >= account.daily_emitted) {
          events.push_back(make_event_locked(
              account, EventType::gigs_added,
              {account.history.begin() + static_cast<std::ptrdiff_t>(offset),
               account.history.begin() + static_cast<std::ptrdiff_t>(offset + count)}));
        }
        offset += count;
      }
      account.daily_emitted = static_cast<int>(account.day_counts.size());
    }
  }
  return deliver(events);
}

std::vector<RideActivity> ProviderMock::simulate_day(std::string const& account_id,
                                                     int n_rides) {
  if (n_rides < 0) throw Error(ErrorCode::validation, "n_rides must be >= 0");
  std::lock_guard lock(mu_);
  Account& account = account_locked(account_id);
  int const day_index = static_cast<int>(account.day_counts.size()) + 1;
  auto rides = generate_day(account.params, account.info.generator_seed, day_index,
                            n_rides, account.info.account_id, account.info.driver_ref);
  account.day_counts.push_back(n_rides);
  account.history.insert(account.history.end(), rides.begin(), rides.end());
  return rides;
}

RideActivity ProviderMock::update_gig_tips(std::string const& account_id,
                                           std::string const& activity_id, Cents tips) {
  if (tips.value() < 0) throw Error(ErrorCode::validation, "tips must be >= 0");
  auto lock_slot = emission_lock(account_id);
  std::lock_guard emit_guard(*lock_slot);
  std::vector<PendingEvent> events;
  RideActivity updated;
  {
    std::lock_guard lock(mu_);
    Account& account = account_locked(account_id);
    auto it = std::find_if(account.history.begin(), account.history.end(),
                           [&](RideActivity const& a) { return a.activity_id == activity_id; });
    if (it == account.history.end()) {
      throw Error(ErrorCode::not_found, "unknown gig " + activity_id);
    }
    apply_tips(*it, tips);
    account.tip_edits.emplace_back(activity_id, tips.value());
    updated = *it;
    if (transport_) {
      events.push_back(make_event_locked(account, EventType::gigs_updated, {updated}));
    }
  }
  deliver(events);
  return updated;
}

void ProviderMock::remove_account(std::string const& account_id) {
  auto lock_slot = emission_lock(account_id);
  std::lock_guard emit_guard(*lock_slot);
  std::vector<PendingEvent> events;
  {
    std::lock_guard lock(mu_);
    Account& account = account_locked(account_id);
    if (transport_) {
      events.push_back(make_event_locked(account, EventType::account_removed, {}));
    }
    account.removed = true;
  }
  deliver(events);
}

std::optional<ProviderAccount> ProviderMock::find_account(
    std::string const& account_id) const {
  std::lock_guard lock(mu_);
  auto it = accounts_.find(account_id);
  if (it == accounts_.end() || it->second->removed) return std::nullopt;
  return it->second->info;
}

std::optional<ProviderAccount> ProviderMock::find_by_driver_ref(
    std::string const& driver_ref) const {
  std::string account_id;
  {
    std::lock_guard lock(mu_);
    auto it = by_driver_ref_.find(driver_ref);
    if (it == by_driver_ref_.end()) return std::nullopt;
    account_id = it->second;
  }
  return find_account(account_id);
}

std::vector<ProviderAccount> ProviderMock::accounts() const {
  std::lock_guard lock(mu_);
  std::vector<ProviderAccount> out;
  for (auto const& [id, account] : accounts_) {
    if (!account->removed) out.push_back(account->info);
  }
  return out;
}

std::size_t ProviderMock::history_size(std::string const& account_id) const {
  std::lock_guard lock(mu_);
  return account_locked(account_id).history.size();
}

std::string ProviderMock::history_digest(std::string const& account_id) const {
  std::lock_guard lock(mu_);
  std::string all;
  for (auto const& a : account_locked(account_id).history) {
    all += to_json(a).dump();
    all += '\n';
  }
  return crypto::sha256_hex(all);
}

std::vector<DeadLetter> ProviderMock::dead_letters() const {
  std::lock_guard lock(mu_);
  return dead_letters_;
}

json ProviderMock::save_state() const {
  std::lock_guard lock(mu_);
  json accounts = json::array();
  for (auto const& [id, a] : accounts_) {
    json edits = json::array();
    for (auto const& [gig, cents] : a->tip_edits) edits.push_back({gig, cents});
    accounts.push_back({{"account", to_json(a->info)},
                        {"params", to_json(a->params)},
                        {"day_counts", a->day_counts},
                        {"daily_emitted", a->daily_emitted},
                        {"tip_edits", edits},
                        {"removed", a->removed},
                        {"event_seq", a->event_seq}});
  }
  return json{{"version", 1}, {"accounts", accounts}};
}

void ProviderMock::load_state(json const& state) {
  std::map<std::string, std::unique_ptr<Account>> loaded;
  std::map<std::string, std::string> refs;
  try {
    for (json const& entry : state.at("accounts")) {
      auto a = std::make_unique<Account>();
      a->info = account_from_json(entry.at("account"));
      a->params = params_from_json(entry.at("params"));
      a->history = generate_history(a->params, a->info.generator_seed,
                                    a->info.account_id, a->info.driver_ref);
      a->day_counts = entry.at("day_counts").get<std::vector<int>>();
      for (std::size_t d = 0; d < a->day_counts.size(); ++d) {
        auto rides = generate_day(a->params, a->info.generator_seed,
                                  static_cast<int>(d) + 1, a->day_counts[d],
                                  a->info.account_id, a->info.driver_ref);
        a->history.insert(a->history.end(), rides.begin(), rides.end());
      }
      for (json const& edit : entry.at("tip_edits")) {
        auto const gig = edit.at(0).get<std::string>();
        Cents const tips(edit.at(1).get<std::int64_t>());
        for (auto& ride : a->history) {
          if (ride.activity_id == gig) apply_tips(ride, tips);
        }
        a->tip_edits.emplace_back(gig, tips.value());
      }
      a->daily_emitted = entry.at("daily_emitted").get<int>();
      a->removed = entry.at("removed").get<bool>();
      a->event_seq = entry.at("event_seq").get<std::uint64_t>();
      refs[a->info.driver_ref] = a->info.account_id;
      loaded[a->info.account_id] = std::move(a);
    }
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request, std::string("malformed provider state: ") + e.what());
  }
  std::lock_guard lock(mu_);
  accounts_ = std::move(loaded);
  by_driver_ref_ = std::move(refs);
}

}  // namespace fairfare::provider
