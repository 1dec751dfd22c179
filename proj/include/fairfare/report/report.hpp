#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairfare/pipeline/pipeline.hpp"

namespace fairfare::report {

// Takeaway wording, loaded from a versioned template document.
struct Templates {
  std::string version;
  std::string insufficient_data;
  // section -> {title, takeaway, takeaway_significant?}
  std::map<std::string, std::map<std::string, std::string>> sections;
};

Templates templates_from_json(nlohmann::json const& j);
Templates const& default_templates();

// Fixed section order.
inline constexpr char const* kSectionKeys[] = {"summary", "weekly", "perception",
                                               "airport", "surge",  "rate_per_mile"};

struct Section {
  std::string key;
  std::string title;
  bool insufficient = false;
  std::string takeaway;
  nlohmann::json figure;  // typed series; null for an insufficient block
};

struct Report {
  std::string report_id;
  Timestamp generated_at;
  nlohmann::json filter;
  std::string pipeline_digest;
  std::string templates_version;
  std::vector<Section> sections;
};

// Derived from the bundle digest and template version, so it is known
// before the report is built.
std::string report_id_for(std::string const& pipeline_digest,
                          Templates const& templates = default_templates());

// Pure: same bundle and templates, same report.
Report build_report(pipeline::Bundle const& bundle,
                    Templates const& templates = default_templates());

nlohmann::json to_json(Report const& report);
Report report_from_json(nlohmann::json const& j);

std::string render_html(Report const& report);
std::string render_text(Report const& report);

// file name -> CSV text, one file per section series.
std::vector<std::pair<std::string, std::string>> export_csv(pipeline::Bundle const& bundle);

// Writes report.json, report.html, report.txt, csv/ and manifest.json into
// `dir`, replacing it atomically.
Report write_report(pipeline::Bundle const& bundle, std::filesystem::path const& dir,
                    Templates const& templates = default_templates());

// Fills {slot} placeholders; contract_violation when one is left unfilled.
std::string fill_template(std::string const& text,
                          std::map<std::string, std::string> const& slots);

}  // namespace fairfare::report
