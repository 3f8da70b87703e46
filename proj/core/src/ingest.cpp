#include "dvd/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "dvd/errors.hpp"
#include "dvd/image_io.hpp"

namespace dvd {

namespace fs = std::filesystem;

namespace {

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("missing directory " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || !is_image(e.path())) continue;
    const std::string stem = e.path().stem().string();
    if (!out.emplace(stem, e.path()).second) {
      throw FormatError("two images share the stem '" + stem + "' in " + dir.string());
    }
  }
  return out;
}

std::vector<EvalPair> from_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("pairs") || !j["pairs"].is_array()) {
    throw FormatError((dir / "manifest.json").string() + ": expected {\"pairs\": [...]}");
  }
  std::vector<EvalPair> pairs;
  std::vector<std::string> missing;
  for (const auto& p : j["pairs"]) {
    if (!p.is_object() || !p.contains("id") || !p.contains("distorted") || !p.contains("gt")) {
      throw FormatError((dir / "manifest.json").string() + ": each pair needs id, distorted and gt");
    }
    EvalPair e{p["id"].get<std::string>(), dir / p["distorted"].get<std::string>(),
               dir / p["gt"].get<std::string>()};
    for (const auto& f : {e.distorted, e.gt}) {
      if (!fs::is_regular_file(f)) missing.push_back(f.string());
    }
    pairs.push_back(std::move(e));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw FormatError("manifest references missing files:" + list);
  }
  return pairs;
}

}  // namespace

BenchmarkLayout parse_benchmark_layout(std::string_view s) {
  if (s == "docunet_style") return BenchmarkLayout::DocunetStyle;
  if (s == "dir300_style") return BenchmarkLayout::Dir300Style;
  throw InvalidArgument("unknown benchmark layout '" + std::string(s) + "' (docunet_style, dir300_style)");
}

std::vector<EvalPair> ingest_external_benchmark(const fs::path& dir, BenchmarkLayout layout) {
  if (!fs::is_directory(dir)) throw FormatError("benchmark directory not found: " + dir.string());
  std::vector<EvalPair> pairs;
  if (fs::exists(dir / "manifest.json")) {
    pairs = from_manifest(dir);
  } else {
    const bool docunet = layout == BenchmarkLayout::DocunetStyle;
    const auto distorted = images_by_stem(dir / (docunet ? "crop" : "dist"));
    const auto gts = images_by_stem(dir / (docunet ? "scan" : "gt"));
    std::vector<std::string> unmatched;
    std::set<std::string> used;
    for (const auto& [stem, path] : distorted) {
      std::string key = stem;
      if (docunet) {
        const auto us = stem.rfind('_');
        key = us == std::string::npos ? std::string() : stem.substr(0, us);
      }
      const auto it = gts.find(key);
      if (key.empty() || it == gts.end()) {
        unmatched.push_back(path.string());
        continue;
      }
      used.insert(key);
      pairs.push_back({stem, path, it->second});
    }
    for (const auto& [stem, path] : gts) {
      if (!used.count(stem)) unmatched.push_back(path.string());
    }
    if (!unmatched.empty()) {
      std::sort(unmatched.begin(), unmatched.end());
      std::string list;
      for (const auto& u : unmatched) list += "\n  " + u;
      throw FormatError(std::to_string(unmatched.size()) + " file(s) without a partner:" + list);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const EvalPair& a, const EvalPair& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    if (pairs[i].id == pairs[i - 1].id) throw FormatError("duplicate pair id '" + pairs[i].id + "'");
  }
  return pairs;
}

void write_eval_pairs(const std::vector<EvalPair>& pairs, const fs::path& out) {
  fs::create_directories(out / "input");
  fs::create_directories(out / "gt");
  nlohmann::json list = nlohmann::json::array();
  for (const auto& p : pairs) {
    write_png(out / "input" / (p.id + ".png"), read_png(p.distorted, 3));
    write_png(out / "gt" / (p.id + ".png"), read_png(p.gt, 3));
    list.push_back({{"id", p.id}, {"distorted", p.distorted.string()}, {"gt", p.gt.string()}});
  }
  std::ofstream f(out / "pairs.json");
  f << nlohmann::json{{"pairs", list}}.dump(2) << "\n";
  if (!f) throw FormatError("cannot write " + (out / "pairs.json").string());
}

}  // namespace dvd
