#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "dvd/denoiser.hpp"
#include "dvd/diffusion.hpp"
#include "dvd/schedule.hpp"

namespace dvd {

struct RunConfig {
  std::uint64_t seed = 0;
  struct Data {
    std::string train_dir, test_dir;
  } data;
  NetConfig net;
  struct Schedule {
    int T = 1000;
    double beta_start = 1e-4, beta_end = 0.02, eta = 0.0;
  } schedule;
  struct Train {
    int batch_size = 8;
    std::int64_t updates = 1000;
    double lr = 1e-4;
    int rollout_steps = 3;
    bool tvcr = true;
    double grad_clip = 1.0;
    int log_every = 10;
    int checkpoint_every = 0;  // 0: only at the end
  } train;
  struct Sample {
    int steps = 3;
    bool dual = false;
    bool tvcr = true;
  } sample;
  struct Eval {
    std::string flow = "dis";
    int max_side = 512;  // <= 0: full resolution
  } eval;
  struct Ocr {
    std::string endpoint;       // MLLM OCR service, gives mmed / mmcer
    std::string text_endpoint;  // plain OCR engine, gives ed / cer
    int concurrency = 2;
    int timeout_ms = 30000;
  } ocr;

  NoiseSchedule make_schedule() const;
  TrainerOptions trainer_options() const;
  SamplerOptions sampler_options() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

/// 64-bit FNV-1a of the canonical (sorted-key, compact) JSON, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);
std::string config_hash(const RunConfig& c);

}  // namespace dvd
