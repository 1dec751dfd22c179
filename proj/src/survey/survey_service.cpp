#include "fairfare/survey/survey_service.hpp"

#include <cmath>

#include "fairfare/crypto.hpp"
#include "fairfare/embedded_data.hpp"
#include "fairfare/error.hpp"
#include "fairfare/pipeline/cleaning.hpp"

namespace fairfare::survey {

using nlohmann::json;

namespace {

std::size_t utf8_length(std::string const& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string token_hash(std::string const& token) { return crypto::sha256_hex(token); }

}  // namespace

SurveyDefinition definition_from_json(json const& j) {
  try {
    SurveyDefinition d;
    d.survey_id = j.at("survey_id").get<std::string>();
    d.version = j.at("version").get<std::string>();
    d.intro = j.value("intro", "");
    for (auto const& q : j.at("questions")) {
      Question out;
      out.id = q.at("id").get<std::string>();
      out.text = q.at("text").get<std::string>();
      out.answer_type = q.at("answer_type").get<std::string>();
      if (out.answer_type == "percentage") {
        out.min = q.value("min", 0.0);
        out.max = q.value("max", 100.0);
        if (*out.min > *out.max) throw Error(ErrorCode::validation, out.id + ": min > max");
      } else if (out.answer_type == "free_text") {
        out.max_length = q.value("max_length", std::size_t{2000});
      } else {
        throw Error(ErrorCode::validation, out.id + ": unknown answer_type " + out.answer_type);
      }
      d.questions.push_back(std::move(out));
    }
    return d;
  } catch (json::exception const& e) {
    throw Error(ErrorCode::validation, std::string("survey definition: ") + e.what());
  }
}

json to_json(SurveyDefinition const& def) {
  json qs = json::array();
  for (auto const& q : def.questions) {
    json o{{"id", q.id}, {"text", q.text}, {"answer_type", q.answer_type}};
    if (q.min) o["min"] = *q.min;
    if (q.max) o["max"] = *q.max;
    if (q.max_length) o["max_length"] = *q.max_length;
    qs.push_back(std::move(o));
  }
  return {{"survey_id", def.survey_id},
          {"version", def.version},
          {"intro", def.intro},
          {"questions", std::move(qs)}};
}

SurveyDefinition const& default_definition() {
  static SurveyDefinition const def =
      definition_from_json(json::parse(embedded::survey_take_rate_v1));
  return def;
}

void ConsoleSms::send(std::string const& phone, std::string const& body) {
  std::lock_guard lock(mu_);
  out_ << "[sms] to " << phone << ": " << body << std::endl;
}

TranscriptSms::TranscriptSms(std::filesystem::path path, Clock clock)
    : path_(std::move(path)), clock_(std::move(clock)) {}

void TranscriptSms::send(std::string const& phone, std::string const& body) {
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(ErrorCode::unavailable, "cannot open transcript " + path_.string());
  out << json{{"phone", phone}, {"body", body}, {"sent_at", format_timestamp(clock_())}}.dump()
      << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::unavailable, "transcript write failed");
}

std::vector<json> TranscriptSms::read_all() const {
  std::vector<json> lines;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(json::parse(line));
  }
  return lines;
}

json to_json(PersonalSummaryView const& v) {
  json j = pipeline::to_json(v.summary);
  j["driver_id"] = v.driver_id;
  j["status"] = v.no_analyzable_rides() ? "no_analyzable_rides" : "ok";
  return j;
}

SurveyService::SurveyService(store::Datastore& store, SmsSender& sms, Options options,
                             SurveyDefinition definition)
    : store_(store), sms_(sms), options_(std::move(options)), definition_(std::move(definition)) {}

IssuedInvite SurveyService::issue_invite(std::string const& driver_id) {
  if (store_.is_tombstoned(driver_id)) throw Error(ErrorCode::gone, "driver has been deleted");
  auto const profile = store_.get_profile(driver_id);
  if (!profile) throw Error(ErrorCode::not_found, "unknown driver");

  std::string const token = crypto::random_hex(16);
  store::InviteRecord record{token_hash(token), driver_id, store_.now(), false};
  if (!store_.insert_invite(record)) {
    throw Error(ErrorCode::conflict, "driver already has a survey invite");
  }
  IssuedInvite issued{driver_id, options_.base_url + "/survey/" + token, record.issued_at};
  std::string body = options_.message_template;
  if (auto pos = body.find("{url}"); pos != std::string::npos) {
    body.replace(pos, 5, issued.url);
  } else {
    body += " " + issued.url;
  }
  try {
    sms_.send(profile->phone, body);
  } catch (...) {
    // No message, no invite: the trigger will try again.
    store_.revoke_invite(record.token_hash);
    throw;
  }
  return issued;
}

SurveyDefinition const& SurveyService::fetch_survey(std::string const& token) const {
  auto const invite = store_.find_invite(token_hash(token));
  if (!invite || invite->consumed) throw Error(ErrorCode::gone, "survey link is not valid");
  return definition_;
}

SurveyResponse SurveyService::submit(std::string const& token, json const& answers) {
  auto const hash = token_hash(token);
  auto const invite = store_.find_invite(hash);
  if (!invite) throw Error(ErrorCode::gone, "survey link is not valid");
  if (!answers.is_object()) throw Error(ErrorCode::validation, "answers must be an object");
  for (auto const& [key, _] : answers.items()) {
    bool known = false;
    for (auto const& q : definition_.questions) known = known || q.id == key;
    if (!known) throw Error(ErrorCode::validation, "unknown question " + key);
  }

  SurveyResponse r;
  r.driver_id = invite->driver_id;
  r.submitted_at = store_.now();
  for (auto const& q : definition_.questions) {
    auto const it = answers.find(q.id);
    if (q.answer_type == "percentage") {
      if (it == answers.end() || !it->is_number()) {
        throw Error(ErrorCode::validation, q.id + " must be a number");
      }
      double const v = it->get<double>();
      if (!std::isfinite(v) || v < *q.min || v > *q.max) {
        throw Error(ErrorCode::validation, q.id + " must be between " + json(*q.min).dump() +
                                               " and " + json(*q.max).dump());
      }
      if (q.id == "estimated_take_rate_pct") r.estimated_take_rate_pct = v;
      if (q.id == "fair_take_rate_pct") r.fair_take_rate_pct = v;
    } else {
      std::string text;
      if (it != answers.end() && !it->is_null()) {
        if (!it->is_string()) throw Error(ErrorCode::validation, q.id + " must be text");
        text = it->get<std::string>();
      }
      if (utf8_length(text) > *q.max_length) {
        throw Error(ErrorCode::validation,
                    q.id + " is longer than " + std::to_string(*q.max_length) + " characters");
      }
      if (q.id == "factors_text") r.factors_text = text;
    }
  }

  switch (store_.consume_invite_and_store(hash, r)) {
    case store::ConsumeOutcome::stored:
      return r;
    case store::ConsumeOutcome::already_consumed:
      throw Error(ErrorCode::conflict, "this survey has already been answered");
    case store::ConsumeOutcome::unknown_token:
      break;
  }
  throw Error(ErrorCode::gone, "survey link is not valid");
}

PersonalSummaryView SurveyService::personal_summary(std::string const& driver_id) const {
  if (store_.is_tombstoned(driver_id)) throw Error(ErrorCode::gone, "driver has been deleted");
  if (!store_.get_response(driver_id)) {
    throw Error(ErrorCode::locked, "answer the survey to unlock your summary");
  }
  store::AccessToken self;
  self.driver_id = driver_id;
  self.expires_at = Timestamp::max();
  store::ActivityQuery q;
  q.driver_id = driver_id;
  auto const rides = store_.get_activities(self, q);
  auto const cleaned = pipeline::clean(rides);
  return {driver_id, pipeline::personal_summary(cleaned.retained)};
}

}  // namespace fairfare::survey
