#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairfare/classify.hpp"
#include "fairfare/pipeline/analytics.hpp"
#include "fairfare/pipeline/cleaning.hpp"
#include "fairfare/ride_activity.hpp"
#include "fairfare/survey_response.hpp"

namespace fairfare::pipeline {

// Bumped whenever any computation below changes its output.
inline constexpr char kPipelineVersion[] = "fairfare-pipeline/1";

// A frozen copy of everything the analysis reads. Free-text survey
// answers are never copied in.
struct Snapshot {
  std::vector<RideActivity> activities;
  std::map<std::string, std::vector<std::string>> driver_affiliations;
  std::vector<AffiliationInfo> affiliations;
  std::vector<SurveyResponse> responses;
};

// Canonical form: activities by id, responses by driver, lists sorted.
Snapshot canonicalize(Snapshot snapshot);
nlohmann::json to_json(Snapshot const& snapshot);
Snapshot snapshot_from_json(nlohmann::json const& j);
// Content digest of the canonical form; independent of input order.
std::string snapshot_id(Snapshot const& snapshot);

enum class Category { airport, surge };

struct FilterSpec {
  std::optional<std::vector<std::string>> affiliation_ids;
  std::optional<Timestamp> from;
  std::optional<Timestamp> to;  // inclusive
  // Union: a ride passes when it is in any listed category.
  std::optional<std::vector<Category>> categories;

  // Throws validation on from > to, an empty category list, or an
  // affiliation id absent from `known` (skipped when `known` is null).
  void validate(std::vector<std::string> const* known = nullptr) const;
  bool empty() const { return !affiliation_ids && !from && !to && !categories; }
};

nlohmann::json to_json(FilterSpec const& f);
// A date-only "to" covers that whole day. Throws bad_request on malformed
// input and validation on an inverted range.
FilterSpec filter_from_json(nlohmann::json const& j);

struct PipelineConfig {
  ZipSet airport_zips{"80249"};
  double mode_bin_width = 0.5;
  std::vector<double> distance_edges = default_distance_edges();
};

nlohmann::json to_json(PipelineConfig const& c);
PipelineConfig pipeline_config_from_json(nlohmann::json const& j);

struct Bundle {
  std::string digest;
  std::string snapshot_id;
  std::string pipeline_version;
  FilterSpec filter;
  PipelineConfig config;
  // Latest ride end among the filtered activities; epoch when none.
  Timestamp data_as_of{};
  CleaningReport cleaning;
  SummaryTable summary;
  SummaryTable by_affiliation;
  SummaryTable by_region;
  std::vector<WeeklyPoint> weekly;
  ComparisonResult airport;
  ComparisonResult surge;
  PerceptionComparison perception;
  std::vector<DistanceBin> rate_per_mile;
  std::vector<CleanRide> rides;
};

std::vector<RideActivity> apply_filter(Snapshot const& snapshot, FilterSpec const& filter,
                                       PipelineConfig const& config);

// Pure function of (snapshot content, filter, config, pipeline version).
std::string bundle_digest(std::string const& snapshot_id, FilterSpec const& filter,
                          PipelineConfig const& config);
Bundle compute_bundle(Snapshot const& snapshot, FilterSpec const& filter,
                      PipelineConfig const& config);

// Directory layout: manifest.json, one JSON file per artifact and
// rides.ndjson. Writing is atomic (staged directory, then rename).
void write_bundle(Bundle const& bundle, std::filesystem::path const& dir);
Bundle read_bundle(std::filesystem::path const& dir);

class Pipeline {
 public:
  // Empty cache_dir keeps everything in memory.
  explicit Pipeline(std::filesystem::path cache_dir = {}, PipelineConfig config = {});

  PipelineConfig const& config() const { return config_; }

  std::string put_snapshot(Snapshot snapshot);
  bool has_snapshot(std::string const& id) const;
  // Throws not_found.
  Snapshot get_snapshot(std::string const& id) const;

  struct RunResult {
    std::shared_ptr<Bundle const> bundle;
    bool cache_hit = false;
    std::filesystem::path path;  // empty for in-memory pipelines
  };

  // Throws not_found for an unknown snapshot.
  RunResult run(std::string const& snapshot_id, FilterSpec const& filter);

  std::filesystem::path bundle_dir(std::string const& digest) const;

 private:
  std::filesystem::path snapshot_path(std::string const& id) const;

  std::filesystem::path cache_dir_;
  PipelineConfig config_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Snapshot const>> snapshots_;
  std::map<std::string, std::shared_ptr<Bundle const>> bundles_;
};

}  // namespace fairfare::pipeline
