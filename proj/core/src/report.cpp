#include "dvd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dvd/errors.hpp"

namespace dvd {

using nlohmann::json;

namespace {

std::size_t metric_index(std::string_view name) {
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    if (name == kMetricNames[i]) return i;
  }
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

constexpr std::array<const char*, 4> kFactors{"layout", "lighting", "angle", "warp_kind"};

std::string factor_value(const DomainTags& t, std::string_view factor) {
  if (factor == "layout") return std::string(to_string(t.layout));
  if (factor == "lighting") return std::string(to_string(t.lighting));
  if (factor == "angle") return std::string(to_string(t.angle));
  return std::string(to_string(t.warp_kind));
}

// Sums in the order samples are added, which is sorted-id order.
struct Accumulator {
  std::array<double, 7> sum{};
  std::array<int, 7> count{};
  int samples = 0;
  void add(const SampleMetrics& s) {
    ++samples;
    for (std::size_t i = 0; i < sum.size(); ++i) {
      if (s.values[i]) {
        sum[i] += *s.values[i];
        ++count[i];
      }
    }
  }
  GroupStats stats() const {
    GroupStats g;
    g.samples = samples;
    g.count = count;
    for (std::size_t i = 0; i < sum.size(); ++i) g.mean[i] = count[i] ? sum[i] / count[i] : 0.0;
    return g;
  }
};

json stats_json(const GroupStats& g) {
  json means = json::object(), counts = json::object();
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    means[kMetricNames[i]] = g.count[i] ? json(g.mean[i]) : json(nullptr);
    counts[kMetricNames[i]] = g.count[i];
  }
  return json{{"samples", g.samples}, {"mean", means}, {"count", counts}};
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
  if (!out) throw FormatError("cannot write " + p.string());
}

}  // namespace

std::optional<double>& SampleMetrics::operator[](std::string_view name) { return values[metric_index(name)]; }
const std::optional<double>& SampleMetrics::operator[](std::string_view name) const {
  return values[metric_index(name)];
}

MetricReport aggregate_report(std::vector<SampleMetrics> per_sample,
                              const std::map<std::string, DomainTags>& domain_index, ReportMeta meta) {
  std::sort(per_sample.begin(), per_sample.end(),
            [](const SampleMetrics& a, const SampleMetrics& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < per_sample.size(); ++i) {
    if (per_sample[i].id == per_sample[i - 1].id) {
      throw InvalidArgument("duplicate sample id '" + per_sample[i].id + "'");
    }
  }
  MetricReport r;
  r.meta = std::move(meta);

  if (!domain_index.empty()) {
    std::vector<std::string> missing;
    for (const auto& s : per_sample) {
      if (!domain_index.count(s.id)) missing.push_back(s.id);
    }
    if (!missing.empty()) {
      std::string list;
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
      if (missing.size() > 20) list += ", ...";
      throw AggregationError("no domain tags for " + std::to_string(missing.size()) + " sample(s): " + list,
                             missing);
    }
  }

  Accumulator all;
  std::map<std::string, Accumulator> combos;
  std::map<std::string, std::map<std::string, Accumulator>> margins;
  for (const auto& s : per_sample) {
    all.add(s);
    if (domain_index.empty()) continue;
    const DomainTags& t = domain_index.at(s.id);
    r.domains[s.id] = t;
    combos[t.key()].add(s);
    for (const char* f : kFactors) margins[f][factor_value(t, f)].add(s);
  }
  r.overall = all.stats();
  for (const auto& [k, a] : combos) r.combinations[k] = a.stats();
  for (const auto& [f, vals] : margins) {
    for (const auto& [v, a] : vals) r.marginals[f][v] = a.stats();
  }
  r.per_sample = std::move(per_sample);
  return r;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

json report_to_json(const MetricReport& r) {
  json samples = json::array();
  for (const auto& s : r.per_sample) {
    json row{{"id", s.id}};
    for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
      row[kMetricNames[i]] = s.values[i] ? json(*s.values[i]) : json(nullptr);
    }
    row["errors"] = s.errors;
    if (auto it = r.domains.find(s.id); it != r.domains.end()) {
      for (const char* f : kFactors) row[f] = factor_value(it->second, f);
    }
    samples.push_back(row);
  }
  json combos = json::object();
  for (const auto& [k, g] : r.combinations) combos[k] = stats_json(g);
  json margins = json::object();
  for (const auto& [f, vals] : r.marginals) {
    for (const auto& [v, g] : vals) margins[f][v] = stats_json(g);
  }
  json meta{{"config_hash", r.meta.config_hash}, {"timestamp", r.meta.timestamp}, {"backends", r.meta.backends}};
  for (const auto& [k, v] : r.meta.extra.items()) meta[k] = v;
  return json{{"schema_version", 1},
              {"meta", meta},
              {"per_sample", samples},
              {"aggregates", {{"overall", stats_json(r.overall)}, {"combinations", combos}, {"marginals", margins}}}};
}

std::string report_to_csv(const MetricReport& r) {
  std::string out = "id,layout,lighting,angle,warp_kind";
  for (const char* m : kMetricNames) out += std::string(",") + m;
  out += ",errors,config_hash\r\n";
  for (const auto& s : r.per_sample) {
    out += csv_quote(s.id);
    const auto it = r.domains.find(s.id);
    for (const char* f : kFactors) out += "," + (it == r.domains.end() ? std::string() : factor_value(it->second, f));
    for (const auto& v : s.values) out += "," + (v ? format_double(*v) : std::string());
    std::string errs;
    for (std::size_t i = 0; i < s.errors.size(); ++i) errs += (i ? "; " : "") + s.errors[i];
    out += "," + csv_quote(errs) + "," + csv_quote(r.meta.config_hash) + "\r\n";
  }
  return out;
}

std::string marginal_plot_svg(const MetricReport& r, const std::string& factor) {
  const auto fit = r.marginals.find(factor);
  const std::map<std::string, GroupStats> empty;
  const auto& vals = fit == r.marginals.end() ? empty : fit->second;
  constexpr std::array<const char*, 3> metrics{"ms_ssim", "ld", "ad"};
  constexpr std::array<const char*, 3> colors{"#4c72b0", "#dd8452", "#55a868"};
  const int panel_w = 260, panel_h = 220, margin = 40;
  const int width = margin + static_cast<int>(metrics.size()) * (panel_w + margin);
  const int height = panel_h + 2 * margin + 30;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<desc>config_hash=" << xml_escape(r.meta.config_hash) << "</desc>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << margin << "\" y=\"18\" font-size=\"14\">by " << xml_escape(factor) << "</text>\n";

  for (std::size_t m = 0; m < metrics.size(); ++m) {
    const std::size_t mi = metric_index(metrics[m]);
    const int x0 = margin + static_cast<int>(m) * (panel_w + margin), y0 = margin;
    double vmax = 0.0;
    for (const auto& [v, g] : vals) {
      if (g.count[mi]) vmax = std::max(vmax, g.mean[mi]);
    }
    if (vmax <= 0) vmax = 1.0;
    svg << "<text x=\"" << x0 << "\" y=\"" << y0 - 6 << "\">" << metrics[m] << "</text>\n";
    svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 + panel_h << "\" x2=\"" << x0 + panel_w << "\" y2=\""
        << y0 + panel_h << "\" stroke=\"black\"/>\n";
    const int n = std::max<int>(1, static_cast<int>(vals.size()));
    const double slot = static_cast<double>(panel_w) / n;
    int k = 0;
    for (const auto& [v, g] : vals) {
      const double x = x0 + k * slot + slot * 0.15;
      if (g.count[mi]) {
        const double h = panel_h * g.mean[mi] / vmax;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3g</text>\n",
                      x, y0 + panel_h - h, slot * 0.7, h, colors[m], x + slot * 0.35, y0 + panel_h - h - 3,
                      g.mean[mi]);
        svg << buf;
      }
      svg << "<text x=\"" << x + slot * 0.35 << "\" y=\"" << y0 + panel_h + 14 << "\" text-anchor=\"middle\">"
          << xml_escape(v) << "</text>\n";
      ++k;
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_report(const MetricReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_text(dir / "report.csv", report_to_csv(r));
  for (const char* f : kFactors) {
    if (r.marginals.count(f)) write_text(dir / ("plot_" + std::string(f) + ".svg"), marginal_plot_svg(r, f));
  }
}

}  // namespace dvd
