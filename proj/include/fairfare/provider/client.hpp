#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "fairfare/http.hpp"
#include "fairfare/provider/provider_mock.hpp"

namespace fairfare::provider {

// What the platform needs from the payroll-data provider. Failures surface
// as fairfare::Error; `unavailable` means the provider could not be reached.
class ProviderClient {
 public:
  virtual ~ProviderClient() = default;

  virtual ProviderAccount create_account(std::string const& driver_ref,
                                         nlohmann::json const& params,
                                         std::uint64_t seed) = 0;
  virtual std::optional<ProviderAccount> get_account(std::string const& account_id) = 0;
  virtual GigPage list_gigs(std::string const& account_id, std::string const& cursor,
                            int limit) = 0;
  virtual void remove_account(std::string const& account_id) = 0;
};

class InProcessProviderClient : public ProviderClient {
 public:
  explicit InProcessProviderClient(ProviderMock& mock) : mock_(mock) {}

  ProviderAccount create_account(std::string const& driver_ref,
                                 nlohmann::json const& params,
                                 std::uint64_t seed) override;
  std::optional<ProviderAccount> get_account(std::string const& account_id) override;
  GigPage list_gigs(std::string const& account_id, std::string const& cursor,
                    int limit) override;
  void remove_account(std::string const& account_id) override;

 private:
  ProviderMock& mock_;
};

class HttpProviderClient : public ProviderClient {
 public:
  explicit HttpProviderClient(std::string base_url) : base_url_(std::move(base_url)) {}

  ProviderAccount create_account(std::string const& driver_ref,
                                 nlohmann::json const& params,
                                 std::uint64_t seed) override;
  std::optional<ProviderAccount> get_account(std::string const& account_id) override;
  GigPage list_gigs(std::string const& account_id, std::string const& cursor,
                    int limit) override;
  void remove_account(std::string const& account_id) override;

 private:
  std::string base_url_;
};

// POST /provider/accounts, GET /provider/accounts/:id,
// GET /provider/accounts/:id/gigs, POST /provider/webhook-endpoints and the
// simulation controls used by the cli.
void add_provider_routes(http::Router& router, ProviderMock& mock);

nlohmann::json to_json(GigPage const& page);
GigPage gig_page_from_json(nlohmann::json const& j);

}  // namespace fairfare::provider
