#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dvd/synth.hpp"

namespace dvd {

inline constexpr int kDatasetSchemaVersion = 1;

struct DatasetInfo {
  int latent_size = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct Dataset {
  DatasetInfo info;
  std::vector<SampleRecord> records;
};

// <root>/index.json
// <root>/samples/<id>/{warped.png, flat.png, gt_full.dvdm, gt_latent.dvdm,
//                      fg_mask.png, textline.png, meta.json}
void write_sample(const std::filesystem::path& sample_dir, const SampleRecord& rec);
SampleRecord read_sample(const std::filesystem::path& sample_dir);

void write_dataset(const std::vector<SampleRecord>& records, const std::filesystem::path& root,
                   const DatasetInfo& info);
Dataset read_dataset(const std::filesystem::path& root);

/// Domain tags keyed by id, from <root>/samples/*/meta.json.
std::vector<std::pair<std::string, DomainTags>> read_domain_index(const std::filesystem::path& root);

}  // namespace dvd
