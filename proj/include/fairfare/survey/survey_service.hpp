#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/pipeline/analytics.hpp"
#include "fairfare/store/datastore.hpp"
#include "fairfare/timeutil.hpp"

namespace fairfare::survey {

struct Question {
  std::string id;
  std::string text;
  std::string answer_type;  // percentage | free_text
  std::optional<double> min;
  std::optional<double> max;
  std::optional<std::size_t> max_length;
};

struct SurveyDefinition {
  std::string survey_id;
  std::string version;
  std::string intro;
  std::vector<Question> questions;
};

// Throws validation when a question is malformed or an answer type is
// unknown.
SurveyDefinition definition_from_json(nlohmann::json const& j);
nlohmann::json to_json(SurveyDefinition const& def);
// The shipped take-rate perception survey.
SurveyDefinition const& default_definition();

class SmsSender {
 public:
  virtual ~SmsSender() = default;
  virtual void send(std::string const& phone, std::string const& body) = 0;
};

class ConsoleSms : public SmsSender {
 public:
  explicit ConsoleSms(std::ostream& out) : out_(out) {}
  void send(std::string const& phone, std::string const& body) override;

 private:
  std::ostream& out_;
  std::mutex mu_;
};

// Appends {phone, body, sent_at} lines to a file.
class TranscriptSms : public SmsSender {
 public:
  TranscriptSms(std::filesystem::path path, Clock clock = system_now);
  void send(std::string const& phone, std::string const& body) override;
  std::vector<nlohmann::json> read_all() const;

 private:
  std::filesystem::path path_;
  Clock clock_;
  std::mutex mu_;
};

struct IssuedInvite {
  std::string driver_id;
  std::string url;
  Timestamp issued_at;
};

struct PersonalSummaryView {
  std::string driver_id;
  pipeline::PersonalSummary summary;
  bool no_analyzable_rides() const { return summary.n_rides == 0; }
};

nlohmann::json to_json(PersonalSummaryView const& v);

class SurveyService {
 public:
  struct Options {
    std::string base_url = "http://localhost:8080";
    // {url} is replaced by the survey link.
    std::string message_template =
        "FairFare: your ride data is in. Answer three quick questions to see your "
        "take rate: {url}";
  };

  SurveyService(store::Datastore& store, SmsSender& sms, Options options,
                SurveyDefinition definition = default_definition());

  // conflict when the driver already has an invite, gone after deletion,
  // not_found for an unknown driver. Exactly one message per invite.
  IssuedInvite issue_invite(std::string const& driver_id);

  // gone for an unknown or consumed token.
  SurveyDefinition const& fetch_survey(std::string const& token) const;

  // Answers keyed by question id. validation leaves the token usable;
  // gone for an unknown token; conflict once it has been used.
  SurveyResponse submit(std::string const& token, nlohmann::json const& answers);

  // locked until the driver has submitted.
  PersonalSummaryView personal_summary(std::string const& driver_id) const;

  SurveyDefinition const& definition() const { return definition_; }

 private:
  store::Datastore& store_;
  SmsSender& sms_;
  Options options_;
  SurveyDefinition definition_;
};

}  // namespace fairfare::survey
