#include "dvd/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dvd/errors.hpp"
#include "dvd/image_io.hpp"
#include "dvd/mapping_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dvd {

namespace {

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw FormatError(p.string() + ": missing or unreadable");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw FormatError(p.string() + ": cannot open for writing");
  f << j.dump(2) << '\n';
}

DocumentImage read_mask(const fs::path& p) {
  DocumentImage m = read_png(p, 1);
  for (float& v : m.pixels()) v = v > 0.5f ? 1.0f : 0.0f;
  return m;
}

template <typename T>
T field(const json& j, const char* key, const fs::path& origin) {
  if (!j.contains(key)) throw FormatError(origin.string() + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(origin.string() + ": bad value for '" + key + "'");
  }
}

DomainTags parse_tags(const json& meta, const fs::path& origin) {
  try {
    DomainTags t;
    t.layout = parse_layout(field<std::string>(meta, "layout", origin));
    t.lighting = parse_lighting(field<std::string>(meta, "lighting", origin));
    t.angle = parse_angle(field<std::string>(meta, "angle", origin));
    t.warp_kind = parse_warp_kind(field<std::string>(meta, "warp_kind", origin));
    return t;
  } catch (const InvalidArgument& e) {
    throw FormatError(origin.string() + ": " + e.what());
  }
}

}  // namespace

void write_sample(const fs::path& dir, const SampleRecord& rec) {
  fs::create_directories(dir);
  write_png(dir / "warped.png", rec.warped);
  write_png(dir / "flat.png", rec.flat);
  write_dvdm(dir / "gt_full.dvdm", rec.gt_map_full);
  write_dvdm(dir / "gt_latent.dvdm", rec.gt_map_latent);
  write_png(dir / "fg_mask.png", rec.fg_mask);
  write_png(dir / "textline.png", rec.textline_mask);
  json meta;
  meta["id"] = rec.id;
  meta["layout"] = to_string(rec.domains.layout);
  meta["lighting"] = to_string(rec.domains.lighting);
  meta["angle"] = to_string(rec.domains.angle);
  meta["warp_kind"] = to_string(rec.domains.warp_kind);
  meta["amplitude"] = rec.amplitude;
  meta["seed"] = rec.seed;
  write_json(dir / "meta.json", meta);
}

SampleRecord read_sample(const fs::path& dir) {
  const json meta = read_json(dir / "meta.json");
  SampleRecord rec;
  rec.id = field<std::string>(meta, "id", dir / "meta.json");
  rec.domains = parse_tags(meta, dir / "meta.json");
  rec.amplitude = field<double>(meta, "amplitude", dir / "meta.json");
  rec.seed = field<std::uint64_t>(meta, "seed", dir / "meta.json");
  rec.warped = read_png(dir / "warped.png", 3);
  rec.flat = read_png(dir / "flat.png", 3);
  rec.gt_map_full = read_dvdm(dir / "gt_full.dvdm");
  rec.gt_map_latent = read_dvdm(dir / "gt_latent.dvdm");
  rec.fg_mask = read_mask(dir / "fg_mask.png");
  rec.textline_mask = read_mask(dir / "textline.png");
  if (!rec.warped.same_shape(rec.flat) || rec.gt_map_full.height() != rec.warped.height() ||
      rec.gt_map_full.width() != rec.warped.width()) {
    throw FormatError(dir.string() + ": image and mapping sizes disagree");
  }
  return rec;
}

void write_dataset(const std::vector<SampleRecord>& records, const fs::path& root,
                   const DatasetInfo& info) {
  fs::create_directories(root / "samples");
  json ids = json::array();
  for (const auto& rec : records) {
    write_sample(root / "samples" / rec.id, rec);
    ids.push_back(rec.id);
  }
  json index;
  index["schema_version"] = kDatasetSchemaVersion;
  index["count"] = records.size();
  index["latent_size"] = info.latent_size;
  index["seed"] = info.seed;
  index["config_hash"] = info.config_hash;
  index["ids"] = ids;
  write_json(root / "index.json", index);
}

Dataset read_dataset(const fs::path& root) {
  const fs::path index_path = root / "index.json";
  const json index = read_json(index_path);
  if (field<int>(index, "schema_version", index_path) != kDatasetSchemaVersion) {
    throw FormatError(index_path.string() + ": unsupported schema_version");
  }
  Dataset ds;
  ds.info.latent_size = field<int>(index, "latent_size", index_path);
  ds.info.seed = field<std::uint64_t>(index, "seed", index_path);
  ds.info.config_hash = index.value("config_hash", std::string{});
  const auto ids = field<std::vector<std::string>>(index, "ids", index_path);
  if (field<std::size_t>(index, "count", index_path) != ids.size()) {
    throw FormatError(index_path.string() + ": count does not match ids");
  }
  ds.records.reserve(ids.size());
  for (const auto& id : ids) {
    SampleRecord rec = read_sample(root / "samples" / id);
    if (rec.id != id) throw FormatError((root / "samples" / id / "meta.json").string() + ": id mismatch");
    if (rec.gt_map_latent.height() != ds.info.latent_size) {
      throw FormatError((root / "samples" / id / "gt_latent.dvdm").string() +
                        ": latent size disagrees with index.json");
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

std::vector<std::pair<std::string, DomainTags>> read_domain_index(const fs::path& root) {
  const fs::path samples = root / "samples";
  if (!fs::is_directory(samples)) throw FormatError(samples.string() + ": not a directory");
  std::vector<std::pair<std::string, DomainTags>> out;
  for (const auto& entry : fs::directory_iterator(samples)) {
    if (!entry.is_directory()) continue;
    const fs::path meta_path = entry.path() / "meta.json";
    const json meta = read_json(meta_path);
    out.emplace_back(field<std::string>(meta, "id", meta_path), parse_tags(meta, meta_path));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

}  // namespace dvd
