#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dvd/synth.hpp"

namespace dvd {

inline constexpr std::array<const char*, 7> kMetricNames{"ms_ssim", "ld", "ad", "ed", "cer", "mmed", "mmcer"};

struct SampleMetrics {
  std::string id;
  // Indexed like kMetricNames; unset means unavailable for this sample.
  std::array<std::optional<double>, 7> values;
  std::vector<std::string> errors;

  std::optional<double>& operator[](std::string_view name);
  const std::optional<double>& operator[](std::string_view name) const;
};

struct GroupStats {
  std::array<double, 7> mean{};
  std::array<int, 7> count{};  // samples contributing to each mean
  int samples = 0;
};

struct ReportMeta {
  std::string config_hash;
  std::string timestamp;  // supplied by the caller so output bytes are reproducible
  std::map<std::string, std::string> backends;
  nlohmann::json extra = nlohmann::json::object();
};

struct MetricReport {
  ReportMeta meta;
  std::vector<SampleMetrics> per_sample;  // sorted by id
  std::map<std::string, DomainTags> domains;
  GroupStats overall;
  std::map<std::string, GroupStats> combinations;  // DomainTags::key()
  // factor name -> value -> stats
  std::map<std::string, std::map<std::string, GroupStats>> marginals;
};

/// Groups by domain combination and by each factor alone. Every id in
/// `per_sample` must be tagged in `domain_index` (AggregationError
/// otherwise). An empty index aggregates only the overall means.
MetricReport aggregate_report(std::vector<SampleMetrics> per_sample,
                              const std::map<std::string, DomainTags>& domain_index, ReportMeta meta);

class AggregationError : public std::runtime_error {
 public:
  AggregationError(const std::string& what, std::vector<std::string> ids)
      : std::runtime_error(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  std::vector<std::string> ids_;
};

nlohmann::json report_to_json(const MetricReport& r);
/// One row per sample; RFC 4180 (CRLF, quoted where needed), values as %.17g.
std::string report_to_csv(const MetricReport& r);
std::string csv_quote(std::string_view field);
std::string format_double(double v);

/// SVG bar chart of MS-SSIM, LD and AD per value of `factor`.
std::string marginal_plot_svg(const MetricReport& r, const std::string& factor);

/// report.json, report.csv and plot_<factor>.svg under `dir`.
void write_report(const MetricReport& r, const std::filesystem::path& dir);

}  // namespace dvd
