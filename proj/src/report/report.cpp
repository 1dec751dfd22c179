#include "fairfare/report/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fairfare/crypto.hpp"
#include "fairfare/embedded_data.hpp"
#include "fairfare/error.hpp"
#include "fairfare/format.hpp"

namespace fairfare::report {

using nlohmann::json;
using pipeline::AggregateSummary;
using pipeline::Bundle;
using pipeline::ComparisonResult;

namespace {

constexpr char kReportFormat[] = "fairfare-report/1";

std::string pct(double v) { return fixed(v, 2); }
std::string usd(double v) { return fixed(v, 2); }

std::string p_text(double p) {
  if (p >= 0.001) return fixed(p, 3);
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(1);
  out << std::scientific << p;
  return out.str();
}

std::string html_escape(std::string const& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string bin_label(double lo, double hi) { return fixed(lo, 0) + "-" + fixed(hi, 0); }

Section insufficient(Templates const& t, std::string key, std::string const& reason) {
  Section s;
  s.key = std::move(key);
  s.title = t.sections.at(s.key).at("title");
  s.insufficient = true;
  s.takeaway = fill_template(t.insufficient_data, {{"reason", reason}});
  return s;
}

Section summary_section(Bundle const& b, Templates const& t) {
  if (b.summary.rows.empty()) {
    return insufficient(t, "summary", "no rides remained after cleaning");
  }
  AggregateSummary const& all = b.summary.rows.front();
  Section s;
  s.key = "summary";
  s.title = t.sections.at("summary").at("title");
  s.takeaway = fill_template(t.sections.at("summary").at("takeaway"),
                             {{"n_rides", std::to_string(all.n_rides)},
                              {"n_drivers", std::to_string(all.n_drivers)},
                              {"take_rate_mean", pct(all.take_rate_mean_of_ratios)},
                              {"take_rate_ratio", pct(all.take_rate_ratio_of_means)},
                              {"rider_price", usd(all.mean_rider_price_usd)},
                              {"base_pay", usd(all.mean_base_pay_usd)},
                              {"tips", usd(all.mean_tips_usd)}});
  s.figure = {{"rows", pipeline::to_json(b.summary)},
              {"by_affiliation", pipeline::to_json(b.by_affiliation)},
              {"by_region", pipeline::to_json(b.by_region)},
              {"cleaning", pipeline::to_json(b.cleaning)}};
  return s;
}

Section weekly_section(Bundle const& b, Templates const& t) {
  if (b.weekly.empty()) return insufficient(t, "weekly", "no dated rides in the selection");
  auto const peak = std::max_element(b.weekly.begin(), b.weekly.end(), [](auto& x, auto& y) {
    return x.mean_take_rate_pct < y.mean_take_rate_pct;
  });
  auto const low = std::min_element(b.weekly.begin(), b.weekly.end(), [](auto& x, auto& y) {
    return x.mean_take_rate_pct < y.mean_take_rate_pct;
  });
  auto const& last = b.weekly.back();
  Section s;
  s.key = "weekly";
  s.title = t.sections.at("weekly").at("title");
  s.takeaway = fill_template(t.sections.at("weekly").at("takeaway"),
                             {{"peak_week", peak->week.to_string()},
                              {"max_pct", pct(peak->mean_take_rate_pct)},
                              {"low_week", low->week.to_string()},
                              {"min_pct", pct(low->mean_take_rate_pct)},
                              {"last_week", last.week.to_string()},
                              {"last_pct", pct(last.mean_take_rate_pct)}});
  json points = json::array();
  for (auto const& p : b.weekly) {
    points.push_back({{"week", p.week.to_string()},
                      {"week_start", format_date(iso_week_start(p.week))},
                      {"mean_take_rate_pct", p.mean_take_rate_pct},
                      {"n_rides", p.n_rides}});
  }
  s.figure = {{"points", std::move(points)}, {"weighting", "per ride"}};
  return s;
}

Section perception_section(Bundle const& b, Templates const& t) {
  auto const& p = b.perception;
  if (p.n_respondents == 0 || !p.mean_estimated_pct || !p.actual_pct) {
    return insufficient(t, "perception",
                        "no survey responses from drivers with analyzable rides");
  }
  Section s;
  s.key = "perception";
  s.title = t.sections.at("perception").at("title");
  s.takeaway = fill_template(t.sections.at("perception").at("takeaway"),
                             {{"n_respondents", std::to_string(p.n_respondents)},
                              {"estimated", pct(*p.mean_estimated_pct)},
                              {"fair", pct(*p.mean_fair_pct)},
                              {"actual", pct(*p.actual_pct)}});
  s.figure = pipeline::to_json(p);
  return s;
}

Section comparison_section(ComparisonResult const& c, std::string const& key,
                           Templates const& t) {
  if (c.degenerate()) {
    return insufficient(t, key,
                        "no " + (c.n_a == 0 ? c.label_a : c.label_b) + " rides in the selection");
  }
  auto const& tpl = t.sections.at(key);
  Section s;
  s.key = key;
  s.title = tpl.at("title");
  s.takeaway = fill_template(c.significant_at_05 ? tpl.at("takeaway_significant")
                                                 : tpl.at("takeaway"),
                             {{"mode_a", pct(*c.mode_a)},
                              {"mode_b", pct(*c.mode_b)},
                              {"mean_a", pct(*c.mean_a)},
                              {"mean_b", pct(*c.mean_b)},
                              {"p_value", p_text(*c.p_value)}});
  s.figure = pipeline::to_json(c);
  return s;
}

Section rate_section(Bundle const& b, Templates const& t) {
  if (b.rate_per_mile.empty()) {
    return insufficient(t, "rate_per_mile", "no rides with a usable distance");
  }
  auto const& first = b.rate_per_mile.front();
  auto const& last = b.rate_per_mile.back();
  Section s;
  s.key = "rate_per_mile";
  s.title = t.sections.at("rate_per_mile").at("title");
  s.takeaway = fill_template(t.sections.at("rate_per_mile").at("takeaway"),
                             {{"first_rate", usd(first.mean_pay_per_mile_usd)},
                              {"first_bin", bin_label(first.lower, first.upper)},
                              {"last_rate", usd(last.mean_pay_per_mile_usd)},
                              {"last_bin", bin_label(last.lower, last.upper)}});
  s.figure = {{"bins", pipeline::to_json(b.rate_per_mile)}};
  return s;
}

// -- SVG ---------------------------------------------------------------------

constexpr double kW = 640, kH = 260, kPad = 40;

std::string num(double v) { return fixed(v, 1); }

struct Scale {
  double lo, hi;
  double y(double v) const {
    return hi == lo ? kH / 2 : kH - kPad - (v - lo) / (hi - lo) * (kH - 2 * kPad);
  }
};

std::string svg_open(std::string const& label) {
  return "<svg class=\"chart\" viewBox=\"0 0 " + num(kW) + " " + num(kH) +
         "\" role=\"img\" aria-label=\"" + html_escape(label) + "\">\n" +
         "<line x1=\"" + num(kPad) + "\" y1=\"" + num(kH - kPad) + "\" x2=\"" + num(kW - 10) +
         "\" y2=\"" + num(kH - kPad) + "\" class=\"axis\"/>\n" + "<line x1=\"" + num(kPad) +
         "\" y1=\"10\" x2=\"" + num(kPad) + "\" y2=\"" + num(kH - kPad) + "\" class=\"axis\"/>\n";
}

std::string svg_text(double x, double y, std::string const& text, char const* anchor = "middle") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" +
         html_escape(text) + "</text>\n";
}

std::string line_chart(std::vector<std::pair<std::string, double>> const& pts,
                       std::string const& label) {
  double lo = pts.front().second, hi = lo;
  for (auto const& [_, v] : pts) lo = std::min(lo, v), hi = std::max(hi, v);
  lo = std::floor(lo), hi = std::ceil(hi);
  Scale sc{lo, hi};
  std::string out = svg_open(label);
  std::string path;
  double const step = pts.size() > 1 ? (kW - kPad - 20) / double(pts.size() - 1) : 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    path += (i ? " " : "") + num(kPad + 5 + step * i) + "," + num(sc.y(pts[i].second));
  }
  out += "<polyline class=\"series-a\" fill=\"none\" points=\"" + path + "\"/>\n";
  out += svg_text(kPad - 4, sc.y(hi) + 4, pct(hi), "end");
  out += svg_text(kPad - 4, sc.y(lo) + 4, pct(lo), "end");
  out += svg_text(kPad + 5, kH - kPad + 16, pts.front().first, "start");
  out += svg_text(kW - 15, kH - kPad + 16, pts.back().first, "end");
  return out + "</svg>\n";
}

std::string bar_chart(std::vector<std::pair<std::string, double>> const& bars,
                      std::string const& label, std::string const& unit) {
  double hi = 0;
  for (auto const& [_, v] : bars) hi = std::max(hi, v);
  Scale sc{0, hi > 0 ? hi * 1.1 : 1};
  std::string out = svg_open(label);
  double const slot = (kW - kPad - 20) / double(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    double const x = kPad + 10 + slot * i, w = slot * 0.7, y = sc.y(bars[i].second);
    out += "<rect class=\"series-" + std::string(i % 2 ? "b" : "a") + "\" x=\"" + num(x) +
           "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(kH - kPad - y) +
           "\"/>\n";
    out += svg_text(x + w / 2, y - 4, unit == "$" ? "$" + usd(bars[i].second) : pct(bars[i].second) + unit);
    out += svg_text(x + w / 2, kH - kPad + 16, bars[i].first);
  }
  return out + "</svg>\n";
}

std::string histogram_chart(ComparisonResult const& c) {
  // Shares rather than counts so the groups are comparable.
  auto shares = [](std::vector<pipeline::HistogramBin> const& h, std::size_t n) {
    std::map<double, double> out;
    for (auto const& b : h) out[b.lower] = double(b.count) / double(n);
    return out;
  };
  auto const a = shares(c.histogram_a, c.n_a), b = shares(c.histogram_b, c.n_b);
  double lo = 1e9, hi = -1e9, top = 0;
  for (auto const* m : {&a, &b}) {
    for (auto const& [k, v] : *m) lo = std::min(lo, k), hi = std::max(hi, k), top = std::max(top, v);
  }
  hi += c.bin_width;
  Scale sc{0, top * 1.1};
  auto x_of = [&](double v) { return kPad + 5 + (v - lo) / (hi - lo) * (kW - kPad - 20); };
  std::string out = svg_open(c.label_a + " vs " + c.label_b + " take rate distribution");
  for (auto const& [m, cls] : {std::pair{&b, "series-b"}, std::pair{&a, "series-a"}}) {
    for (auto const& [k, v] : *m) {
      double const x = x_of(k), w = std::max(0.5, x_of(k + c.bin_width) - x);
      out += "<rect class=\"" + std::string(cls) + "\" x=\"" + num(x) + "\" y=\"" + num(sc.y(v)) +
             "\" width=\"" + num(w) + "\" height=\"" + num(kH - kPad - sc.y(v)) + "\"/>\n";
    }
  }
  for (auto const& [mode, cls] : {std::pair{*c.mode_a, "mode-a"}, std::pair{*c.mode_b, "mode-b"}}) {
    double const x = x_of(mode + c.bin_width / 2);
    out += "<line class=\"" + std::string(cls) + "\" x1=\"" + num(x) + "\" y1=\"10\" x2=\"" +
           num(x) + "\" y2=\"" + num(kH - kPad) + "\"/>\n";
  }
  out += svg_text(kPad + 5, kH - kPad + 16, pct(lo) + "%", "start");
  out += svg_text(kW - 15, kH - kPad + 16, pct(hi) + "%", "end");
  out += svg_text(kW - 15, 20, c.label_a + " (n=" + std::to_string(c.n_a) + ")", "end");
  out += svg_text(kW - 15, 36, c.label_b + " (n=" + std::to_string(c.n_b) + ")", "end");
  return out + "</svg>\n";
}

char const* const kTableHeaders[] = {"Type",
                                     "Drivers",
                                     "Rides",
                                     "Distance (miles)",
                                     "Duration (minutes)",
                                     "Ride Price ($)",
                                     "Fees ($)",
                                     "Base Pay ($)",
                                     "Tips ($)",
                                     "Take Rate (Average) (%)",
                                     "Take Rate (Ratio of Means) (%)"};

std::vector<std::string> table_cells(AggregateSummary const& r) {
  return {r.group,
          std::to_string(r.n_drivers),
          std::to_string(r.n_rides),
          fixed(r.mean_distance_miles, 2),
          fixed(r.mean_duration_minutes, 2),
          usd(r.mean_rider_price_usd),
          usd(r.mean_fees_usd),
          usd(r.mean_base_pay_usd),
          usd(r.mean_tips_usd),
          pct(r.take_rate_mean_of_ratios),
          pct(r.take_rate_ratio_of_means)};
}

std::string html_table(std::vector<AggregateSummary> const& rows) {
  std::string out = "<table>\n<tr>";
  for (auto const* h : kTableHeaders) out += "<th>" + html_escape(h) + "</th>";
  out += "</tr>\n";
  for (auto const& r : rows) {
    out += "<tr>";
    for (auto const& c : table_cells(r)) out += "<td>" + html_escape(c) + "</td>";
    out += "</tr>\n";
  }
  return out + "</table>\n";
}

std::string section_figure_html(Section const& s) {
  json const& f = s.figure;
  if (s.key == "summary") {
    auto const t = pipeline::summary_table_from_json(f.at("rows"));
    std::string out = html_table(t.rows);
    auto const aff = pipeline::summary_table_from_json(f.at("by_affiliation"));
    if (!aff.rows.empty()) out += "<h3>By affiliation</h3>\n" + html_table(aff.rows);
    auto const reg = pipeline::summary_table_from_json(f.at("by_region"));
    if (!reg.rows.empty()) out += "<h3>By region</h3>\n" + html_table(reg.rows);
    return out;
  }
  if (s.key == "weekly") {
    std::vector<std::pair<std::string, double>> pts;
    for (auto const& p : f.at("points")) {
      pts.emplace_back(p.at("week").get<std::string>(), p.at("mean_take_rate_pct").get<double>());
    }
    return line_chart(pts, "Weekly mean take rate");
  }
  if (s.key == "perception") {
    auto const p = pipeline::perception_from_json(f);
    return bar_chart({{"Estimated", *p.mean_estimated_pct},
                      {"Fair", *p.mean_fair_pct},
                      {"Actual", *p.actual_pct}},
                     "Estimated, fair and actual take rate", "%");
  }
  if (s.key == "airport" || s.key == "surge") {
    return histogram_chart(pipeline::comparison_from_json(f));
  }
  std::vector<std::pair<std::string, double>> bars;
  for (auto const& b : pipeline::distance_bins_from_json(f.at("bins"))) {
    bars.emplace_back(bin_label(b.lower, b.upper) + " mi", b.mean_pay_per_mile_usd);
  }
  return bar_chart(bars, "Pay per mile by trip distance", "$");
}

std::string section_text(Section const& s) {
  std::ostringstream out;
  json const& f = s.figure;
  if (s.key == "summary") {
    for (auto const& r : pipeline::summary_table_from_json(f.at("rows")).rows) {
      auto const cells = table_cells(r);
      out << "  " << cells[0] << ": " << cells[2] << " rides, " << cells[1]
          << " drivers, take rate " << cells[9] << "% (ratio of means " << cells[10] << "%)\n";
    }
  } else if (s.key == "weekly") {
    out << "  " << f.at("points").size() << " weeks plotted\n";
  } else if (s.key == "perception") {
    auto const p = pipeline::perception_from_json(f);
    out << "  estimated " << pct(*p.mean_estimated_pct) << "%, fair " << pct(*p.mean_fair_pct)
        << "%, actual " << pct(*p.actual_pct) << "%\n";
  } else if (s.key == "airport" || s.key == "surge") {
    auto const c = pipeline::comparison_from_json(f);
    out << "  " << c.label_a << ": n=" << c.n_a << ", mean " << pct(*c.mean_a) << "%, mode "
        << pct(*c.mode_a) << "%\n  " << c.label_b << ": n=" << c.n_b << ", mean "
        << pct(*c.mean_b) << "%, mode " << pct(*c.mode_b) << "%\n  " << c.test_name
        << ", p = " << p_text(*c.p_value) << "\n";
  } else {
    for (auto const& b : pipeline::distance_bins_from_json(f.at("bins"))) {
      out << "  " << bin_label(b.lower, b.upper) << " mi: $" << usd(b.mean_pay_per_mile_usd)
          << "/mi over " << b.n_rides << " rides\n";
    }
  }
  return out.str();
}

std::string csv_join(std::vector<std::string> const& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
  return out + "\n";
}

std::string summary_csv(pipeline::SummaryTable const& t) {
  std::string out = csv_join({std::begin(kTableHeaders), std::end(kTableHeaders)});
  for (auto const& r : t.rows) out += csv_join(table_cells(r));
  return out;
}

std::string comparison_csv(ComparisonResult const& c) {
  std::string out = csv_join({"group", "n_rides", "mean_take_rate_pct", "mode_take_rate_pct",
                              "p_value", "test", "significant_at_05"});
  auto opt = [](std::optional<double> const& v, int d) { return v ? fixed(*v, d) : ""; };
  std::string const p = c.p_value ? fixed(*c.p_value, 6) : "";
  std::string const sig = c.significant_at_05 ? "true" : "false";
  out += csv_join({c.label_a, std::to_string(c.n_a), opt(c.mean_a, 2), opt(c.mode_a, 2), p,
                   c.test_name, sig});
  out += csv_join({c.label_b, std::to_string(c.n_b), opt(c.mean_b, 2), opt(c.mode_b, 2), p,
                   c.test_name, sig});
  return out;
}

std::string histogram_csv(ComparisonResult const& c) {
  std::string out = csv_join({"group", "bin_lower_pct", "bin_upper_pct", "rides"});
  for (auto const& [label, h] : {std::pair{&c.label_a, &c.histogram_a},
                                 std::pair{&c.label_b, &c.histogram_b}}) {
    for (auto const& b : *h) {
      out += csv_join({*label, fixed(b.lower, 2), fixed(b.lower + c.bin_width, 2),
                       std::to_string(b.count)});
    }
  }
  return out;
}

void write_file(std::filesystem::path const& path, std::string const& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw Error(ErrorCode::unavailable, "cannot write " + path.string());
}

}  // namespace

std::string fill_template(std::string const& text,
                          std::map<std::string, std::string> const& slots) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    auto const open = text.find('{', i);
    if (open == std::string::npos) {
      out.append(text, i);
      break;
    }
    auto const close = text.find('}', open);
    if (close == std::string::npos) {
      throw Error(ErrorCode::contract_violation, "unterminated slot in template");
    }
    out.append(text, i, open - i);
    auto const name = text.substr(open + 1, close - open - 1);
    auto const it = slots.find(name);
    if (it == slots.end()) {
      throw Error(ErrorCode::contract_violation, "template slot {" + name + "} has no value");
    }
    out += it->second;
    i = close + 1;
  }
  return out;
}

Templates templates_from_json(json const& j) {
  try {
    Templates t;
    t.version = j.at("version").get<std::string>();
    t.insufficient_data = j.at("insufficient_data").get<std::string>();
    for (auto const& [key, sec] : j.at("sections").items()) {
      for (auto const& [field, text] : sec.items()) t.sections[key][field] = text.get<std::string>();
    }
    for (auto const* key : kSectionKeys) {
      auto const it = t.sections.find(key);
      if (it == t.sections.end() || !it->second.count("title") || !it->second.count("takeaway")) {
        throw Error(ErrorCode::validation, std::string("templates lack section ") + key);
      }
    }
    for (auto const* key : {"airport", "surge"}) {
      if (!t.sections[key].count("takeaway_significant")) {
        throw Error(ErrorCode::validation, std::string(key) + " lacks takeaway_significant");
      }
    }
    return t;
  } catch (json::exception const& e) {
    throw Error(ErrorCode::validation, std::string("templates: ") + e.what());
  }
}

Templates const& default_templates() {
  static Templates const t = templates_from_json(json::parse(embedded::takeaways_v1));
  return t;
}

std::string report_id_for(std::string const& pipeline_digest, Templates const& t) {
  return "rpt_" +
         crypto::sha256_hex(std::string(kReportFormat) + "|" + pipeline_digest + "|" + t.version)
             .substr(0, 24);
}

Report build_report(Bundle const& b, Templates const& t) {
  Report r;
  r.pipeline_digest = b.digest;
  r.generated_at = b.data_as_of;
  r.filter = pipeline::to_json(b.filter);
  r.templates_version = t.version;
  r.report_id = report_id_for(b.digest, t);
  r.sections.push_back(summary_section(b, t));
  r.sections.push_back(weekly_section(b, t));
  r.sections.push_back(perception_section(b, t));
  r.sections.push_back(comparison_section(b.airport, "airport", t));
  r.sections.push_back(comparison_section(b.surge, "surge", t));
  r.sections.push_back(rate_section(b, t));
  return r;
}

json to_json(Report const& r) {
  json sections = json::array();
  for (auto const& s : r.sections) {
    sections.push_back({{"key", s.key},
                        {"title", s.title},
                        {"insufficient_data", s.insufficient},
                        {"takeaway", s.takeaway},
                        {"figure", s.figure}});
  }
  return {{"report_id", r.report_id},
          {"format", kReportFormat},
          {"generated_at", format_timestamp(r.generated_at)},
          {"filter", r.filter},
          {"pipeline_digest", r.pipeline_digest},
          {"templates_version", r.templates_version},
          {"sections", std::move(sections)}};
}

Report report_from_json(json const& j) {
  try {
    Report r;
    r.report_id = j.at("report_id").get<std::string>();
    r.generated_at = parse_timestamp(j.at("generated_at").get<std::string>());
    r.filter = j.at("filter");
    r.pipeline_digest = j.at("pipeline_digest").get<std::string>();
    r.templates_version = j.at("templates_version").get<std::string>();
    for (auto const& s : j.at("sections")) {
      r.sections.push_back({s.at("key").get<std::string>(), s.at("title").get<std::string>(),
                            s.at("insufficient_data").get<bool>(),
                            s.at("takeaway").get<std::string>(), s.at("figure")});
    }
    return r;
  } catch (json::exception const& e) {
    throw Error(ErrorCode::bad_request, std::string("report: ") + e.what());
  }
}

std::string render_html(Report const& r) {
  std::string out =
      "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
      "<title>FairFare report " + html_escape(r.report_id) + "</title>\n<style>\n"
      "body{font-family:sans-serif;max-width:760px;margin:2em auto;color:#222}\n"
      "table{border-collapse:collapse;font-size:.85em}td,th{border:1px solid #ccc;padding:3px 6px}\n"
      "td{text-align:right}td:first-child{text-align:left}\n"
      ".takeaway{background:#f4f4ee;padding:.6em 1em;border-left:4px solid #886}\n"
      ".insufficient{background:#fbeaea;padding:.6em 1em;border-left:4px solid #a44}\n"
      ".chart{width:100%;height:auto}.chart text{font-size:11px}.axis{stroke:#444}\n"
      ".series-a{fill:#4a7ab5;stroke:#4a7ab5;fill-opacity:.7;stroke-width:2}\n"
      ".series-b{fill:#d98b3a;stroke:#d98b3a;fill-opacity:.55;stroke-width:2}\n"
      ".mode-a{stroke:#1d3f6b;stroke-dasharray:4 3}.mode-b{stroke:#8a4f14;stroke-dasharray:4 3}\n"
      "</style>\n</head>\n<body>\n<h1>Take rate report</h1>\n<p>Data as of " +
      html_escape(format_timestamp(r.generated_at)) + ". Filter: <code>" +
      html_escape(r.filter.dump()) + "</code>. Pipeline digest: <code>" +
      html_escape(r.pipeline_digest) + "</code>.</p>\n";
  for (auto const& s : r.sections) {
    out += "<section id=\"" + s.key + "\">\n<h2>" + html_escape(s.title) + "</h2>\n";
    if (s.insufficient) {
      out += "<p class=\"insufficient\">" + html_escape(s.takeaway) + "</p>\n";
    } else {
      out += section_figure_html(s);
      out += "<p class=\"takeaway\">" + html_escape(s.takeaway) + "</p>\n";
    }
    out += "</section>\n";
  }
  // The same typed series, for anything that wants to redraw them.
  std::string data = to_json(r).dump();
  // '<' only occurs inside strings, where \u003c is the same character.
  for (std::size_t pos = 0; (pos = data.find('<', pos)) != std::string::npos; pos += 6) {
    data.replace(pos, 1, "\\u003c");
  }
  out += "<script type=\"application/json\" id=\"report-data\">" + data + "</script>\n";
  return out + "</body>\n</html>\n";
}

std::string render_text(Report const& r) {
  std::ostringstream out;
  out << "TAKE RATE REPORT " << r.report_id << "\n"
      << "data as of " << format_timestamp(r.generated_at) << "\n"
      << "filter " << r.filter.dump() << "\n"
      << "pipeline digest " << r.pipeline_digest << "\n";
  int n = 1;
  for (auto const& s : r.sections) {
    out << "\n" << n++ << ". " << s.title << "\n";
    if (!s.insufficient) out << section_text(s);
    out << "  > " << s.takeaway << "\n";
  }
  return out.str();
}

std::vector<std::pair<std::string, std::string>> export_csv(Bundle const& b) {
  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("summary.csv", summary_csv(b.summary));
  files.emplace_back("summary_by_affiliation.csv", summary_csv(b.by_affiliation));
  files.emplace_back("summary_by_region.csv", summary_csv(b.by_region));

  std::string weekly = csv_join({"week", "week_start", "mean_take_rate_pct", "n_rides"});
  for (auto const& p : b.weekly) {
    weekly += csv_join({p.week.to_string(), format_date(iso_week_start(p.week)),
                        pct(p.mean_take_rate_pct), std::to_string(p.n_rides)});
  }
  files.emplace_back("weekly.csv", weekly);

  std::string perception = csv_join({"measure", "take_rate_pct", "n_respondents"});
  auto const& p = b.perception;
  if (p.n_respondents > 0 && p.mean_estimated_pct && p.actual_pct) {
    auto const n = std::to_string(p.n_respondents);
    perception += csv_join({"Estimated", pct(*p.mean_estimated_pct), n});
    perception += csv_join({"Fair", pct(*p.mean_fair_pct), n});
    perception += csv_join({"Actual", pct(*p.actual_pct), n});
  }
  files.emplace_back("perception.csv", perception);

  files.emplace_back("comparison_airport.csv", comparison_csv(b.airport));
  files.emplace_back("histogram_airport.csv", histogram_csv(b.airport));
  files.emplace_back("comparison_surge.csv", comparison_csv(b.surge));
  files.emplace_back("histogram_surge.csv", histogram_csv(b.surge));

  std::string rate = csv_join({"distance_lower_miles", "distance_upper_miles",
                               "mean_pay_per_mile_usd", "n_rides"});
  for (auto const& bin : b.rate_per_mile) {
    rate += csv_join({fixed(bin.lower, 2), fixed(bin.upper, 2), usd(bin.mean_pay_per_mile_usd),
                      std::to_string(bin.n_rides)});
  }
  files.emplace_back("rate_per_mile.csv", rate);
  return files;
}

Report write_report(Bundle const& bundle, std::filesystem::path const& dir,
                    Templates const& templates) {
  namespace fs = std::filesystem;
  Report const report = build_report(bundle, templates);
  std::vector<std::pair<std::string, std::string>> files{
      {"report.json", to_json(report).dump(2) + "\n"},
      {"report.html", render_html(report)},
      {"report.txt", render_text(report)}};
  for (auto& [name, content] : export_csv(bundle)) files.emplace_back("csv/" + name, content);

  fs::path const stage = dir.string() + ".tmp-" + crypto::random_hex(6);
  fs::create_directories(stage / "csv");
  json digests = json::object();
  for (auto const& [name, content] : files) {
    write_file(stage / name, content);
    digests[name] = crypto::sha256_hex(content);
  }
  json const manifest{{"report_id", report.report_id},
                      {"pipeline_digest", report.pipeline_digest},
                      {"generated_at", format_timestamp(report.generated_at)},
                      {"templates_version", report.templates_version},
                      {"files", digests}};
  write_file(stage / "manifest.json", manifest.dump(2) + "\n");
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (dir.has_parent_path()) fs::create_directories(dir.parent_path());
  fs::rename(stage, dir);
  return report;
}

}  // namespace fairfare::report
