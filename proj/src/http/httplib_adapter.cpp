#include <httplib.h>

#include <algorithm>
#include <cctype>

#include "fairfare/http.hpp"

namespace fairfare::http {

struct Server::Impl {
  Router const& router;
  httplib::Server server;
};

namespace {

void handle(Router const& router, httplib::Request const& in, httplib::Response& out) {
  Request req;
  req.method = in.method;
  req.path = in.path;
  req.body = in.body;
  for (auto const& [k, v] : in.params) req.query.emplace(k, v);
  for (auto const& [k, v] : in.headers) {
    std::string name = k;
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    req.headers.emplace(std::move(name), v);
  }
  Response res = router.dispatch(std::move(req));
  out.status = res.status;
  out.set_content(res.body, res.content_type.c_str());
}

struct Target {
  std::string origin;
  std::string path;
};

Target split_url(std::string const& url) {
  auto const scheme = url.find("://");
  auto const path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Headers to_headers(Headers const& headers) {
  httplib::Headers out;
  for (auto const& [k, v] : headers) out.emplace(k, v);
  return out;
}

ClientResponse from_result(httplib::Result const& result) {
  if (!result) return ClientResponse{0, ""};
  return ClientResponse{result->status, result->body};
}

httplib::Client make_client(std::string const& origin) {
  httplib::Client client(origin);
  client.set_connection_timeout(5);
  client.set_read_timeout(60);
  client.set_write_timeout(60);
  return client;
}

}  // namespace

Server::Server(Router const& router) : impl_(new Impl{router, {}}) {
  impl_->server.Get(".*", [this](auto const& in, auto& out) { handle(impl_->router, in, out); });
  impl_->server.Post(".*", [this](auto const& in, auto& out) { handle(impl_->router, in, out); });
  impl_->server.Delete(".*", [this](auto const& in, auto& out) { handle(impl_->router, in, out); });
  impl_->server.Put(".*", [this](auto const& in, auto& out) { handle(impl_->router, in, out); });
}

Server::~Server() { stop(); }

int Server::bind(std::string const& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Server::listen_after_bind() { impl_->server.listen_after_bind(); }

void Server::stop() { impl_->server.stop(); }

ClientResponse get(std::string const& url, Headers const& headers) {
  auto const target = split_url(url);
  auto client = make_client(target.origin);
  return from_result(client.Get(target.path, to_headers(headers)));
}

ClientResponse post(std::string const& url, std::string const& body,
                    Headers const& headers) {
  auto const target = split_url(url);
  auto client = make_client(target.origin);
  return from_result(
      client.Post(target.path, to_headers(headers), body, "application/json"));
}

ClientResponse del(std::string const& url, Headers const& headers) {
  auto const target = split_url(url);
  auto client = make_client(target.origin);
  return from_result(client.Delete(target.path, to_headers(headers)));
}

std::string url_encode(std::string const& text) {
  return httplib::detail::encode_query_param(text);
}

}  // namespace fairfare::http
