#include "fairfare/provider/client.hpp"

#include "fairfare/error.hpp"

namespace fairfare::provider {

using nlohmann::json;

json to_json(GigPage const& page) {
  json data = json::array();
  for (auto const& a : page.data) data.push_back(to_json(a));
  return json{{"data", std::move(data)}, {"next_cursor", page.next_cursor}};
}

GigPage gig_page_from_json(json const& j) {
  GigPage page;
  for (json const& a : j.at("data")) page.data.push_back(activity_from_json(a));
  page.next_cursor = j.value("next_cursor", "");
  return page;
}

ProviderAccount InProcessProviderClient::create_account(std::string const& driver_ref,
                                                        json const& params,
                                                        std::uint64_t seed) {
  return mock_.create_account(driver_ref, params_from_json(params), seed);
}

std::optional<ProviderAccount> InProcessProviderClient::get_account(
    std::string const& account_id) {
  return mock_.find_account(account_id);
}

GigPage InProcessProviderClient::list_gigs(std::string const& account_id,
                                           std::string const& cursor, int limit) {
  return mock_.list_gigs(account_id, cursor, limit);
}

void InProcessProviderClient::remove_account(std::string const& account_id) {
  mock_.remove_account(account_id);
}

namespace {

ErrorCode code_for_status(int status) {
  switch (status) {
    case 400: return ErrorCode::bad_request;
    case 404: return ErrorCode::not_found;
    case 409: return ErrorCode::conflict;
    case 422: return ErrorCode::validation;
    default: return ErrorCode::unavailable;
  }
}

json checked(http::ClientResponse const& res, char const* what) {
  if (res.status == 0) {
    throw Error(ErrorCode::unavailable, std::string("provider unreachable: ") + what);
  }
  if (res.status < 200 || res.status >= 300) {
    throw Error(code_for_status(res.status),
                std::string("provider ") + what + " failed: " + res.body);
  }
  try {
    return res.body.empty() ? json::object() : json::parse(res.body);
  } catch (json::parse_error const&) {
    throw Error(ErrorCode::unavailable, std::string("provider sent invalid JSON: ") + what);
  }
}

}  // namespace

ProviderAccount HttpProviderClient::create_account(std::string const& driver_ref,
                                                   json const& params,
                                                   std::uint64_t seed) {
  json const body{{"driver_ref", driver_ref}, {"seed", seed}, {"params", params}};
  return account_from_json(
      checked(http::post(base_url_ + "/provider/accounts", body.dump()), "create_account"));
}

std::optional<ProviderAccount> HttpProviderClient::get_account(
    std::string const& account_id) {
  auto const res = http::get(base_url_ + "/provider/accounts/" + http::url_encode(account_id));
  if (res.status == 404) return std::nullopt;
  return account_from_json(checked(res, "get_account"));
}

GigPage HttpProviderClient::list_gigs(std::string const& account_id,
                                      std::string const& cursor, int limit) {
  std::string url = base_url_ + "/provider/accounts/" + http::url_encode(account_id) +
                    "/gigs?limit=" + std::to_string(limit);
  if (!cursor.empty()) url += "&cursor=" + http::url_encode(cursor);
  return gig_page_from_json(checked(http::get(url), "list_gigs"));
}

void HttpProviderClient::remove_account(std::string const& account_id) {
  checked(http::del(base_url_ + "/provider/accounts/" + http::url_encode(account_id)),
          "remove_account");
}

void add_provider_routes(http::Router& router, ProviderMock& mock) {
  using http::Request;
  using http::Response;

  router.add("POST", "/provider/accounts", [&mock](Request const& req) {
    json const body = req.json_body();
    auto const driver_ref = body.at("driver_ref").get<std::string>();
    auto const seed = body.value("seed", std::uint64_t{0});
    auto const params = params_from_json(body.value("params", json::object()));
    return Response::json(201, to_json(mock.create_account(driver_ref, params, seed)));
  });

  router.add("GET", "/provider/accounts", [&mock](Request const& req) {
    json out = json::array();
    for (auto const& a : mock.accounts()) {
      auto const ref = req.query_param("driver_ref");
      if (ref && *ref != a.driver_ref) continue;
      out.push_back(to_json(a));
    }
    return Response::json(200, {{"data", out}});
  });

  router.add("GET", "/provider/accounts/:id", [&mock](Request const& req) {
    auto account = mock.find_account(req.param("id"));
    if (!account) throw Error(ErrorCode::not_found, "unknown account");
    return Response::json(200, to_json(*account));
  });

  router.add("DELETE", "/provider/accounts/:id", [&mock](Request const& req) {
    mock.remove_account(req.param("id"));
    return Response::json(200, {{"removed", req.param("id")}});
  });

  router.add("GET", "/provider/accounts/:id/gigs", [&mock](Request const& req) {
    int limit = 100;
    if (auto l = req.query_param("limit")) {
      try {
        limit = std::stoi(*l);
      } catch (std::logic_error const&) {
        throw Error(ErrorCode::bad_request, "limit is not an integer");
      }
    }
    auto const page = mock.list_gigs(req.param("id"), req.query_param("cursor").value_or(""), limit);
    return Response::json(200, to_json(page));
  });

  router.add("POST", "/provider/webhook-endpoints", [&mock](Request const& req) {
    auto const url = req.json_body().at("url").get<std::string>();
    mock.register_webhook_endpoint(url);
    return Response::json(201, {{"url", url}});
  });

  router.add("POST", "/provider/accounts/:id/simulate-day", [&mock](Request const& req) {
    int const n = req.json_body().value("rides", 0);
    auto const rides = mock.simulate_day(req.param("id"), n);
    return Response::json(200, {{"added", rides.size()}});
  });

  router.add("POST", "/provider/accounts/:id/emit", [&mock](Request const& req) {
    auto const mode = req.json_body().value("schedule", std::string("staged"));
    if (mode != "staged" && mode != "daily") {
      throw Error(ErrorCode::bad_request, "schedule must be staged or daily");
    }
    auto const r = mock.emit_events(req.param("id"),
                                    mode == "staged" ? Schedule::staged : Schedule::daily);
    return Response::json(200, {{"events_emitted", r.events_emitted},
                                {"delivered", r.delivered},
                                {"dead_lettered", r.dead_lettered},
                                {"attempts", r.attempts}});
  });

  router.add("GET", "/provider/dead-letters", [&mock](Request const&) {
    json out = json::array();
    for (auto const& d : mock.dead_letters()) {
      out.push_back({{"event_id", d.event_id},
                     {"account_id", d.account_id},
                     {"attempts", d.attempts},
                     {"last_status", d.last_status}});
    }
    return Response::json(200, {{"data", out}});
  });
}

}  // namespace fairfare::provider
