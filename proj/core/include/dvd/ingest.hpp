#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dvd {

enum class BenchmarkLayout { DocunetStyle, Dir300Style };
BenchmarkLayout parse_benchmark_layout(std::string_view s);

struct EvalPair {
  std::string id;
  std::filesystem::path distorted, gt;
};

/// Pairs distorted and ground-truth images by index.
///   docunet_style: crop/<k>_<v>.<ext> pairs with scan/<k>.<ext>, id "<k>_<v>"
///   dir300_style:  dist/<k>.<ext> pairs with gt/<k>.<ext>, id "<k>"
/// A manifest.json in `dir` ({"pairs": [{"id", "distorted", "gt"}]}, paths
/// relative to `dir`) overrides the convention. Extensions: png, jpg, jpeg.
/// Throws FormatError listing every file without a partner. Sorted by id.
std::vector<EvalPair> ingest_external_benchmark(const std::filesystem::path& dir, BenchmarkLayout layout);

/// Writes <out>/input/<id>.png, <out>/gt/<id>.png and <out>/pairs.json.
void write_eval_pairs(const std::vector<EvalPair>& pairs, const std::filesystem::path& out);

}  // namespace dvd
