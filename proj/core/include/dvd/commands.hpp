#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dvd/config.hpp"
#include "dvd/image.hpp"
#include "dvd/mapping.hpp"
#include "dvd/ocr.hpp"

namespace dvd {

namespace fs = std::filesystem;

/// 0 success, 2 invalid arguments, 3 data/format, 4 training, 5 external service, 1 otherwise.
int exit_code_for(const std::exception& e);

struct SynthArgs {
  fs::path out;
  int count = 0;
  int size = 128;
  int latent = 32;
  std::vector<std::string> layouts;  // empty: all
  std::uint64_t seed = 0;
  bool force = false;
};
/// Returns the dataset config hash.
std::string cmd_synth(const SynthArgs& a);

struct TrainArgs {
  fs::path data;
  std::optional<fs::path> config;
  fs::path ckpt_out;
  std::optional<std::int64_t> updates;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> resume;
  std::optional<fs::path> log;  // default <ckpt_out>.log.jsonl
  bool quiet = false;
};
void cmd_train(const TrainArgs& a);

/// Config stored in checkpoints: data paths replaced by the dataset hash.
nlohmann::json resolved_train_config(const RunConfig& cfg, const std::string& dataset_hash);

struct DewarpArgs {
  fs::path ckpt;
  fs::path input;  // dataset root, directory of images, or one image
  fs::path output;
  std::optional<int> steps;
  std::optional<bool> dual;
  std::optional<std::uint64_t> seed;
};
void cmd_dewarp(const DewarpArgs& a);

struct EvalArgs {
  fs::path pred;
  fs::path gt;  // dataset root (flat.png per sample) or a directory of <id>.png
  std::optional<fs::path> domains;
  fs::path report_out;
  std::optional<fs::path> config;
  std::optional<std::string> ocr_endpoint;
  std::optional<std::string> text_ocr_endpoint;
  std::optional<std::string> flow;
  std::optional<int> max_side;
  bool allow_mixed = false;
  std::string timestamp;  // empty: current UTC time
  // Test hooks; when set they replace the HTTP clients.
  OcrClient* ocr_client = nullptr;
  OcrClient* text_ocr_client = nullptr;
};
void cmd_eval(const EvalArgs& a);

struct IngestArgs {
  fs::path dir;
  std::string layout;
  fs::path out;
};
void cmd_ingest(const IngestArgs& a);

/// Foreground (page vs. background, Otsu) and text-line masks for images
/// that come without them.
struct EstimatedMasks {
  DocumentImage fg, textline;
};
EstimatedMasks estimate_masks(const DocumentImage& img);

/// Upsamples a latent mapping to the image size and applies it.
DocumentImage dewarp_with_latent(const DocumentImage& warped, const GridMapping& latent);

}  // namespace dvd
