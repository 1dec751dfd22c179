#include "fairfare/http.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace fairfare::http {

using nlohmann::json;

namespace {

std::vector<std::string> split_path(std::string const& path) {
  std::vector<std::string> out;
  std::stringstream in(path);
  std::string seg;
  while (std::getline(in, seg, '/')) {
    if (!seg.empty()) out.push_back(seg);
  }
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::optional<std::string> Request::header(std::string const& name) const {
  auto it = headers.find(lower(name));
  if (it == headers.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Request::query_param(std::string const& name) const {
  auto it = query.find(name);
  if (it == query.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Request::bearer_token() const {
  auto auth = header("authorization");
  if (!auth) return std::nullopt;
  static constexpr std::string_view kPrefix = "Bearer ";
  if (auth->size() <= kPrefix.size() || auth->compare(0, kPrefix.size(), kPrefix) != 0) {
    return std::nullopt;
  }
  return auth->substr(kPrefix.size());
}

std::string const& Request::param(std::string const& name) const {
  static std::string const empty;
  auto it = params.find(name);
  return it == params.end() ? empty : it->second;
}

json Request::json_body() const {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (json::parse_error const& e) {
    throw Error(ErrorCode::bad_request, std::string("invalid JSON: ") + e.what());
  }
}

Response Response::json(int status, nlohmann::json const& body) {
  return Response{status, body.dump(), "application/json"};
}

Response Response::error(ErrorCode code, std::string const& message) {
  return error(status_for(code), std::string(to_string(code)), message);
}

Response Response::error(int status, std::string const& code,
                         std::string const& message) {
  return json(status, {{"error", {{"code", code}, {"message", message}}}});
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::bad_request: return 400;
    case ErrorCode::validation: return 422;
    case ErrorCode::unauthorized: return 401;
    case ErrorCode::forbidden: return 403;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::gone: return 410;
    case ErrorCode::locked: return 423;
    case ErrorCode::contract_violation: return 422;
    case ErrorCode::unavailable: return 503;
  }
  return 500;
}

void Router::add(std::string method, std::string pattern, Handler handler) {
  routes_.push_back(Route{std::move(method), split_path(pattern), std::move(handler)});
}

Response Router::dispatch(Request request) const {
  auto const segments = split_path(request.path);
  bool path_known = false;
  for (Route const& route : routes_) {
    if (route.segments.size() != segments.size()) continue;
    std::map<std::string, std::string> params;
    bool match = true;
    for (std::size_t i = 0; i < segments.size() && match; ++i) {
      std::string const& pat = route.segments[i];
      if (!pat.empty() && pat[0] == ':') {
        params[pat.substr(1)] = segments[i];
      } else {
        match = pat == segments[i];
      }
    }
    if (!match) continue;
    path_known = true;
    if (route.method != request.method) continue;
    request.params = std::move(params);
    try {
      return route.handler(request);
    } catch (Error const& e) {
      return Response::error(e.code(), e.what());
    } catch (nlohmann::json::exception const& e) {
      return Response::error(ErrorCode::bad_request, e.what());
    } catch (std::exception const& e) {
      return Response::error(500, "internal", e.what());
    }
  }
  if (path_known) return Response::error(405, "method_not_allowed", request.method);
  return Response::error(ErrorCode::not_found, "no route for " + request.path);
}

}  // namespace fairfare::http
