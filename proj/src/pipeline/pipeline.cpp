#include "fairfare/pipeline/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fairfare/crypto.hpp"
#include "fairfare/error.hpp"

namespace fairfare::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json response_json(SurveyResponse const& r) {
  return {{"driver_id", r.driver_id},
          {"estimated_take_rate_pct", r.estimated_take_rate_pct},
          {"fair_take_rate_pct", r.fair_take_rate_pct},
          {"submitted_at", format_timestamp(r.submitted_at)}};
}

std::string_view category_name(Category c) {
  return c == Category::airport ? "airport" : "surge";
}

Category parse_category(std::string const& s) {
  if (s == "airport") return Category::airport;
  if (s == "surge") return Category::surge;
  throw Error(ErrorCode::validation, "unknown category '" + s + "' (expected airport or surge)");
}

template <typename T>
void sort_unique(std::vector<T>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

FilterSpec canonical_filter(FilterSpec f) {
  if (f.affiliation_ids) sort_unique(*f.affiliation_ids);
  if (f.categories) sort_unique(*f.categories);
  return f;
}

std::string read_file(fs::path const& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(fs::path const& p, std::string const& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error(ErrorCode::unavailable, "cannot write " + p.string());
}

json clean_ride_json(CleanRide const& r) {
  return {{"activity", to_json(r.activity)}, {"take_rate_pct", r.take_rate_pct}};
}

}  // namespace

Snapshot canonicalize(Snapshot s) {
  std::sort(s.activities.begin(), s.activities.end(),
            [](RideActivity const& a, RideActivity const& b) { return a.activity_id < b.activity_id; });
  for (auto& [driver, ids] : s.driver_affiliations) sort_unique(ids);
  std::sort(s.affiliations.begin(), s.affiliations.end(),
            [](AffiliationInfo const& a, AffiliationInfo const& b) { return a.id < b.id; });
  for (auto& r : s.responses) r.factors_text.clear();
  std::sort(s.responses.begin(), s.responses.end(),
            [](SurveyResponse const& a, SurveyResponse const& b) { return a.driver_id < b.driver_id; });
  return s;
}

json to_json(Snapshot const& s) {
  json activities = json::array();
  for (auto const& a : s.activities) activities.push_back(to_json(a));
  json affiliations = json::array();
  for (auto const& a : s.affiliations) {
    affiliations.push_back({{"id", a.id},
                            {"name", a.name},
                            {"region_tag", a.region_tag ? json(*a.region_tag) : json(nullptr)}});
  }
  json responses = json::array();
  for (auto const& r : s.responses) responses.push_back(response_json(r));
  return {{"activities", activities},
          {"driver_affiliations", s.driver_affiliations},
          {"affiliations", affiliations},
          {"responses", responses}};
}

Snapshot snapshot_from_json(json const& j) {
  Snapshot s;
  try {
    for (json const& a : j.at("activities")) s.activities.push_back(activity_from_json(a));
    s.driver_affiliations =
        j.at("driver_affiliations").get<std::map<std::string, std::vector<std::string>>>();
    for (json const& a : j.at("affiliations")) {
      AffiliationInfo info{a.at("id").get<std::string>(), a.at("name").get<std::string>(), {}};
      if (a.contains("region_tag") && !a.at("region_tag").is_null()) {
        info.region_tag = a.at("region_tag").get<std::string>();
      }
      s.affiliations.push_back(std::move(info));
    }
    for (json const& r : j.at("responses")) {
      SurveyResponse resp;
      resp.driver_id = r.at("driver_id").get<std::string>();
      resp.estimated_take_rate_pct = r.at("estimated_take_rate_pct").get<double>();
      resp.fair_take_rate_pct = r.at("fair_take_rate_pct").get<double>();
      resp.submitted_at = parse_timestamp(r.at("submitted_at").get<std::string>());
      s.responses.push_back(std::move(resp));
    }
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request, std::string("malformed snapshot: ") + e.what());
  }
  return s;
}

std::string snapshot_id(Snapshot const& snapshot) {
  return "snap_" + crypto::sha256_hex(to_json(canonicalize(snapshot)).dump()).substr(0, 32);
}

void FilterSpec::validate(std::vector<std::string> const* known) const {
  if (from && to && *from > *to) {
    throw Error(ErrorCode::validation, "date range is empty: from is after to");
  }
  if (categories && categories->empty()) {
    throw Error(ErrorCode::validation, "categories, when given, must not be empty");
  }
  if (affiliation_ids && known) {
    for (auto const& id : *affiliation_ids) {
      if (std::find(known->begin(), known->end(), id) == known->end()) {
        throw Error(ErrorCode::validation, "unknown affiliation id '" + id + "'");
      }
    }
  }
}

json to_json(FilterSpec const& f) {
  json j = {{"affiliation_ids", nullptr}, {"from", nullptr}, {"to", nullptr}, {"categories", nullptr}};
  if (f.affiliation_ids) j["affiliation_ids"] = *f.affiliation_ids;
  if (f.from) j["from"] = format_timestamp(*f.from);
  if (f.to) j["to"] = format_timestamp(*f.to);
  if (f.categories) {
    json cats = json::array();
    for (Category c : *f.categories) cats.push_back(std::string(category_name(c)));
    j["categories"] = cats;
  }
  return j;
}

FilterSpec filter_from_json(json const& j) {
  if (!j.is_object()) throw Error(ErrorCode::bad_request, "filter must be a JSON object");
  FilterSpec f;
  try {
    auto present = [&](char const* k) { return j.contains(k) && !j.at(k).is_null(); };
    if (present("affiliation_ids")) {
      f.affiliation_ids = j.at("affiliation_ids").get<std::vector<std::string>>();
    }
    if (present("from")) f.from = parse_timestamp(j.at("from").get<std::string>());
    if (present("to")) {
      auto const text = j.at("to").get<std::string>();
      f.to = parse_timestamp(text);
      if (text.size() == 10) *f.to += std::chrono::seconds(86399);
    }
    if (present("categories")) {
      std::vector<Category> cats;
      for (json const& c : j.at("categories")) cats.push_back(parse_category(c.get<std::string>()));
      f.categories = std::move(cats);
    }
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request, std::string("malformed filter: ") + e.what());
  }
  f.validate();
  return f;
}

json to_json(PipelineConfig const& c) {
  return {{"airport_zips", std::vector<std::string>(c.airport_zips.begin(), c.airport_zips.end())},
          {"mode_bin_width", c.mode_bin_width},
          {"distance_edges", c.distance_edges}};
}

PipelineConfig pipeline_config_from_json(json const& j) {
  PipelineConfig c;
  auto const zips = j.at("airport_zips").get<std::vector<std::string>>();
  c.airport_zips = ZipSet(zips.begin(), zips.end());
  c.mode_bin_width = j.at("mode_bin_width").get<double>();
  c.distance_edges = j.at("distance_edges").get<std::vector<double>>();
  return c;
}

std::vector<RideActivity> apply_filter(Snapshot const& snapshot, FilterSpec const& filter,
                                       PipelineConfig const& config) {
  std::vector<RideActivity> out;
  for (RideActivity const& a : snapshot.activities) {
    if (filter.affiliation_ids) {
      auto it = snapshot.driver_affiliations.find(a.driver_id);
      if (it == snapshot.driver_affiliations.end()) continue;
      bool const member = std::any_of(it->second.begin(), it->second.end(), [&](auto const& id) {
        return std::find(filter.affiliation_ids->begin(), filter.affiliation_ids->end(), id) !=
               filter.affiliation_ids->end();
      });
      if (!member) continue;
    }
    if (filter.from || filter.to) {
      if (!a.start_time) continue;
      if (filter.from && *a.start_time < *filter.from) continue;
      if (filter.to && *a.start_time > *filter.to) continue;
    }
    if (filter.categories) {
      bool const match = std::any_of(filter.categories->begin(), filter.categories->end(),
                                     [&](Category c) {
                                       return c == Category::surge
                                                  ? a.surge_flag
                                                  : classify_airport(a, config.airport_zips);
                                     });
      if (!match) continue;
    }
    out.push_back(a);
  }
  return out;
}

std::string bundle_digest(std::string const& snapshot_id, FilterSpec const& filter,
                          PipelineConfig const& config) {
  json const key = {{"snapshot_id", snapshot_id},
                    {"filter", to_json(canonical_filter(filter))},
                    {"config", to_json(config)},
                    {"pipeline_version", kPipelineVersion}};
  return crypto::sha256_hex(key.dump());
}

Bundle compute_bundle(Snapshot const& snapshot, FilterSpec const& filter,
                      PipelineConfig const& config) {
  Bundle b;
  b.snapshot_id = snapshot_id(snapshot);
  b.pipeline_version = kPipelineVersion;
  b.filter = canonical_filter(filter);
  b.config = config;
  b.digest = bundle_digest(b.snapshot_id, b.filter, config);

  Snapshot const canon = canonicalize(snapshot);
  auto const filtered = apply_filter(canon, b.filter, config);
  for (auto const& a : filtered) {
    if (a.end_time && *a.end_time > b.data_as_of) b.data_as_of = *a.end_time;
  }
  CleanResult cleaned = clean(filtered);
  b.cleaning = cleaned.report;
  b.rides = std::move(cleaned.retained);

  b.summary = summarize(b.rides, standard_groups(config.airport_zips));
  std::vector<AffiliationInfo> affiliations;
  for (auto const& aff : canon.affiliations) {
    if (!b.filter.affiliation_ids ||
        std::binary_search(b.filter.affiliation_ids->begin(), b.filter.affiliation_ids->end(), aff.id)) {
      affiliations.push_back(aff);
    }
  }
  auto const& membership = canon.driver_affiliations;
  auto const affiliations_of = [&membership](std::string const& driver) {
    auto it = membership.find(driver);
    return it == membership.end() ? std::vector<std::string>{} : it->second;
  };
  b.by_affiliation = summarize(b.rides, affiliation_groups(affiliations, affiliations_of));
  b.by_region = summarize(b.rides, region_groups(canon.affiliations, affiliations_of));
  b.weekly = weekly_series(b.rides);
  b.airport = compare_airport(b.rides, config.airport_zips, config.mode_bin_width);
  b.surge = compare_surge(b.rides, config.mode_bin_width);
  b.perception = perception_vs_actual(canon.responses, b.rides);
  b.rate_per_mile = rate_per_mile(b.rides, config.distance_edges);
  return b;
}

void write_bundle(Bundle const& b, fs::path const& dir) {
  std::map<std::string, std::string> files;
  files["cleaning_report.json"] = to_json(b.cleaning).dump(2) + "\n";
  files["summary.json"] = to_json(b.summary).dump(2) + "\n";
  files["summary_by_affiliation.json"] = to_json(b.by_affiliation).dump(2) + "\n";
  files["summary_by_region.json"] = to_json(b.by_region).dump(2) + "\n";
  files["weekly_series.json"] = to_json(b.weekly).dump(2) + "\n";
  files["comparison_airport.json"] = to_json(b.airport).dump(2) + "\n";
  files["comparison_surge.json"] = to_json(b.surge).dump(2) + "\n";
  files["perception.json"] = to_json(b.perception).dump(2) + "\n";
  files["rate_per_mile.json"] = to_json(b.rate_per_mile).dump(2) + "\n";
  std::string rides;
  for (auto const& r : b.rides) rides += clean_ride_json(r).dump() + "\n";
  files["rides.ndjson"] = std::move(rides);

  json digests = json::object();
  for (auto const& [name, content] : files) digests[name] = crypto::sha256_hex(content);
  json const manifest = {
      {"digest", b.digest},
      {"snapshot_id", b.snapshot_id},
      {"pipeline_version", b.pipeline_version},
      {"filter", to_json(b.filter)},
      {"config", to_json(b.config)},
      {"data_as_of", format_timestamp(b.data_as_of)},
      {"files", digests},
      {"notes",
       {"weekly_series weights every ride equally (not every driver)",
        "take rates are 100 * fees / (rider price - tips); bonus is excluded"}}};

  fs::create_directories(dir.parent_path().empty() ? fs::path(".") : dir.parent_path());
  fs::path const staging = dir.string() + ".tmp-" + crypto::random_hex(6);
  fs::create_directories(staging);
  for (auto const& [name, content] : files) write_file(staging / name, content);
  write_file(staging / "manifest.json", manifest.dump(2) + "\n");
  std::error_code ec;
  fs::remove_all(dir, ec);
  fs::rename(staging, dir, ec);
  if (ec) {
    fs::remove_all(staging);
    if (!fs::exists(dir / "manifest.json")) {
      throw Error(ErrorCode::unavailable, "cannot publish bundle at " + dir.string());
    }
  }
}

Bundle read_bundle(fs::path const& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request, std::string("unreadable bundle manifest: ") + e.what());
  }
  std::map<std::string, std::string> files;
  for (auto const& [name, digest] : manifest.at("files").items()) {
    std::string content = read_file(dir / name);
    if (crypto::sha256_hex(content) != digest.get<std::string>()) {
      throw Error(ErrorCode::contract_violation, "bundle file " + name + " does not match its digest");
    }
    files[name] = std::move(content);
  }
  auto doc = [&](std::string const& name) { return json::parse(files.at(name)); };
  try {
    Bundle b;
    b.digest = manifest.at("digest").get<std::string>();
    b.snapshot_id = manifest.at("snapshot_id").get<std::string>();
    b.pipeline_version = manifest.at("pipeline_version").get<std::string>();
    b.filter = filter_from_json(manifest.at("filter"));
    b.config = pipeline_config_from_json(manifest.at("config"));
    b.data_as_of = parse_timestamp(manifest.at("data_as_of").get<std::string>());
    b.cleaning = cleaning_report_from_json(doc("cleaning_report.json"));
    b.summary = summary_table_from_json(doc("summary.json"));
    b.by_affiliation = summary_table_from_json(doc("summary_by_affiliation.json"));
    b.by_region = summary_table_from_json(doc("summary_by_region.json"));
    b.weekly = weekly_from_json(doc("weekly_series.json"));
    b.airport = comparison_from_json(doc("comparison_airport.json"));
    b.surge = comparison_from_json(doc("comparison_surge.json"));
    b.perception = perception_from_json(doc("perception.json"));
    b.rate_per_mile = distance_bins_from_json(doc("rate_per_mile.json"));
    std::istringstream rides(files.at("rides.ndjson"));
    for (std::string line; std::getline(rides, line);) {
      if (line.empty()) continue;
      json const r = json::parse(line);
      b.rides.push_back(CleanRide{activity_from_json(r.at("activity")), r.at("take_rate_pct").get<double>()});
    }
    return b;
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request, std::string("malformed bundle: ") + e.what());
  }
}

Pipeline::Pipeline(fs::path cache_dir, PipelineConfig config)
    : cache_dir_(std::move(cache_dir)), config_(std::move(config)) {
  if (!cache_dir_.empty()) {
    fs::create_directories(cache_dir_ / "snapshots");
    fs::create_directories(cache_dir_ / "bundles");
  }
}

fs::path Pipeline::snapshot_path(std::string const& id) const {
  return cache_dir_ / "snapshots" / (id + ".json");
}

fs::path Pipeline::bundle_dir(std::string const& digest) const {
  return cache_dir_.empty() ? fs::path{} : cache_dir_ / "bundles" / digest;
}

std::string Pipeline::put_snapshot(Snapshot snapshot) {
  auto canon = std::make_shared<Snapshot const>(canonicalize(std::move(snapshot)));
  std::string const id = snapshot_id(*canon);
  std::lock_guard lock(mu_);
  if (!cache_dir_.empty() && !fs::exists(snapshot_path(id))) {
    fs::path const tmp = snapshot_path(id).string() + ".tmp-" + crypto::random_hex(6);
    write_file(tmp, to_json(*canon).dump());
    fs::rename(tmp, snapshot_path(id));
  }
  snapshots_.emplace(id, std::move(canon));
  return id;
}

bool Pipeline::has_snapshot(std::string const& id) const {
  std::lock_guard lock(mu_);
  return snapshots_.contains(id) || (!cache_dir_.empty() && fs::exists(snapshot_path(id)));
}

Snapshot Pipeline::get_snapshot(std::string const& id) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = snapshots_.find(id); it != snapshots_.end()) return *it->second;
  }
  // Ids are hex digests; anything else cannot name a file of ours.
  bool const plausible = id.starts_with("snap_") &&
                         id.find_first_not_of("0123456789abcdef", 5) == std::string::npos;
  if (!cache_dir_.empty() && plausible && fs::exists(snapshot_path(id))) {
    return snapshot_from_json(json::parse(read_file(snapshot_path(id))));
  }
  throw Error(ErrorCode::not_found, "unknown snapshot '" + id + "'");
}

Pipeline::RunResult Pipeline::run(std::string const& id, FilterSpec const& filter) {
  filter.validate();
  std::string const digest = bundle_digest(id, filter, config_);
  fs::path const dir = bundle_dir(digest);
  {
    std::lock_guard lock(mu_);
    if (auto it = bundles_.find(digest); it != bundles_.end()) return {it->second, true, dir};
  }
  Snapshot const snapshot = get_snapshot(id);
  if (!dir.empty() && fs::exists(dir / "manifest.json")) {
    try {
      auto cached = std::make_shared<Bundle const>(read_bundle(dir));
      std::lock_guard lock(mu_);
      bundles_.emplace(digest, cached);
      return {cached, true, dir};
    } catch (Error const&) {
      // Corrupt cache entry: fall through and rebuild it.
    }
  }
  auto bundle = std::make_shared<Bundle const>(compute_bundle(snapshot, filter, config_));
  if (!dir.empty()) write_bundle(*bundle, dir);
  std::lock_guard lock(mu_);
  auto [it, inserted] = bundles_.emplace(digest, bundle);
  return {it->second, !inserted, dir};
}

}  // namespace fairfare::pipeline
