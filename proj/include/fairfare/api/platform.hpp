#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "fairfare/http.hpp"
#include "fairfare/ingest/ingestor.hpp"
#include "fairfare/pipeline/pipeline.hpp"
#include "fairfare/provider/client.hpp"
#include "fairfare/provider/provider_mock.hpp"
#include "fairfare/report/report.hpp"
#include "fairfare/store/datastore.hpp"
#include "fairfare/survey/survey_service.hpp"
#include "fairfare/timeutil.hpp"

namespace fairfare::api {

struct PlatformConfig {
  std::string admin_key;
  std::string webhook_secret;
  std::string base_url = "http://localhost:8080";
  // Empty: everything in memory, nothing survives the process.
  std::filesystem::path data_dir;
  // Dev mode runs the provider mock in-process and mounts its routes under
  // /provider. Otherwise `provider_url` points at a separate one.
  bool cohost_provider = true;
  std::string provider_url;
  // Empty: invites are printed to stdout.
  std::filesystem::path sms_transcript;
  std::int64_t survey_threshold = 10;
  std::size_t default_page_limit = 500;
  // Background jobs (backfills, report builds) run on a worker thread;
  // off, they run inline, which tests use for determinism.
  bool async_jobs = true;
  Clock clock = system_now;

  // ADMIN_KEY, PROVIDER_WEBHOOK_SECRET, BASE_URL, DATA_DIR; `overrides`
  // (same keys) win over the process environment.
  static PlatformConfig from_env(std::map<std::string, std::string> const& overrides = {});
};

// Current store contents as a pipeline snapshot.
pipeline::Snapshot snapshot_of(store::Datastore const& store);

// One worker thread draining a FIFO of jobs.
class JobRunner {
 public:
  explicit JobRunner(bool async);
  ~JobRunner();
  void submit(std::function<void()> job);
  void wait_idle();

 private:
  void loop();

  bool async_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> queue_;
  bool busy_ = false;
  bool stop_ = false;
  std::thread worker_;
};

// Everything the HTTP service needs, wired together.
class Platform {
 public:
  explicit Platform(PlatformConfig config);
  ~Platform();
  Platform(Platform const&) = delete;
  Platform& operator=(Platform const&) = delete;

  http::Router const& router() const { return router_; }
  http::Response handle(http::Request request) const { return router_.dispatch(std::move(request)); }

  store::Datastore& store() { return *store_; }
  ingest::Ingestor& ingestor() { return *ingestor_; }
  survey::SurveyService& surveys() { return *surveys_; }
  pipeline::Pipeline& pipeline() { return *pipeline_; }
  // Null unless co-hosted.
  provider::ProviderMock* provider_mock() { return mock_.get(); }
  PlatformConfig const& config() const { return config_; }

  // Current store contents as a pipeline snapshot.
  pipeline::Snapshot snapshot() const;
  // Validates a filter document against the known affiliations.
  pipeline::FilterSpec parse_filter(nlohmann::json const& j) const;

  void wait_idle() { jobs_.wait_idle(); }
  void save_provider_state();

 private:
  struct ReportJob {
    std::string status;  // pending | ready | failed
    std::string error;
  };

  void add_routes();
  std::optional<store::AccessToken> authenticate(http::Request const& req) const;
  store::AccessToken require_admin(http::Request const& req) const;
  store::AccessToken require_driver(http::Request const& req) const;
  // Driver token for this driver or the admin token. A token for another
  // driver gets not_found, so ids cannot be probed.
  store::AccessToken require_self_or_admin(http::Request const& req,
                                           std::string const& driver_id) const;
  std::filesystem::path const& reports_dir() const { return reports_dir_; }

  PlatformConfig config_;
  std::filesystem::path reports_dir_;
  std::unique_ptr<store::Datastore> store_;
  std::unique_ptr<provider::ProviderMock> mock_;
  std::unique_ptr<provider::ProviderClient> client_;
  std::unique_ptr<survey::SmsSender> sms_;
  std::unique_ptr<survey::SurveyService> surveys_;
  std::unique_ptr<ingest::Ingestor> ingestor_;
  std::unique_ptr<pipeline::Pipeline> pipeline_;
  http::Router router_;
  mutable std::mutex reports_mu_;
  std::map<std::string, ReportJob> report_jobs_;
  std::mutex provider_save_mu_;
  JobRunner jobs_;
};

}  // namespace fairfare::api
