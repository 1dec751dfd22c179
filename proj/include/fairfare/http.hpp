#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/error.hpp"

namespace fairfare::http {

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  // Lower-cased names.
  std::map<std::string, std::string> headers;
  std::string body;
  // Filled by the router from ":name" pattern segments.
  std::map<std::string, std::string> params;

  std::optional<std::string> header(std::string const& name) const;
  std::optional<std::string> query_param(std::string const& name) const;
  std::optional<std::string> bearer_token() const;
  std::string const& param(std::string const& name) const;
  // Parsed body; throws bad_request on invalid JSON.
  nlohmann::json json_body() const;
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";

  static Response json(int status, nlohmann::json const& body);
  static Response error(ErrorCode code, std::string const& message);
  static Response error(int status, std::string const& code,
                        std::string const& message);
};

int status_for(ErrorCode code);

using Handler = std::function<Response(Request const&)>;

class Router {
 public:
  void add(std::string method, std::string pattern, Handler handler);

  // Unknown paths give 404, known paths with the wrong verb 405, and any
  // fairfare::Error escaping a handler its mapped status.
  Response dispatch(Request request) const;

 private:
  struct Route {
    std::string method;
    std::vector<std::string> segments;
    Handler handler;
  };
  std::vector<Route> routes_;
};

// Blocking HTTP/1.1 listener around a Router.
class Server {
 public:
  explicit Server(Router const& router);
  ~Server();
  Server(Server const&) = delete;
  Server& operator=(Server const&) = delete;

  // Binds; returns the bound port (an ephemeral one when `port` is 0).
  int bind(std::string const& host, int port);
  // Serves until stop(); call after bind().
  void listen_after_bind();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ClientResponse {
  int status = 0;  // 0 when the peer was unreachable
  std::string body;
};

using Headers = std::map<std::string, std::string>;

ClientResponse get(std::string const& url, Headers const& headers = {});
ClientResponse post(std::string const& url, std::string const& body,
                    Headers const& headers = {});
ClientResponse del(std::string const& url, Headers const& headers = {});

std::string url_encode(std::string const& text);

}  // namespace fairfare::http
