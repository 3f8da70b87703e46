#include "dvd/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "dvd/errors.hpp"

namespace dvd {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw InvalidArgument("config: unknown key '" + where + "." + k + "'");
  }
}

template <class T>
void opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  j = json{{"seed", c.seed},
           {"data", {{"train_dir", c.data.train_dir}, {"test_dir", c.data.test_dir}}},
           {"net", c.net},
           {"schedule",
            {{"T", c.schedule.T},
             {"beta_start", c.schedule.beta_start},
             {"beta_end", c.schedule.beta_end},
             {"eta", c.schedule.eta}}},
           {"train",
            {{"batch_size", c.train.batch_size},
             {"updates", c.train.updates},
             {"lr", c.train.lr},
             {"rollout_steps", c.train.rollout_steps},
             {"tvcr", c.train.tvcr},
             {"grad_clip", c.train.grad_clip},
             {"log_every", c.train.log_every},
             {"checkpoint_every", c.train.checkpoint_every}}},
           {"sample", {{"steps", c.sample.steps}, {"dual", c.sample.dual}, {"tvcr", c.sample.tvcr}}},
           {"eval", {{"flow", c.eval.flow}, {"max_side", c.eval.max_side}}},
           {"ocr",
            {{"endpoint", c.ocr.endpoint},
             {"text_endpoint", c.ocr.text_endpoint},
             {"concurrency", c.ocr.concurrency},
             {"timeout_ms", c.ocr.timeout_ms}}}};
}

void from_json(const json& j, RunConfig& c) {
  try {
    reject_unknown(j, {"seed", "data", "net", "schedule", "train", "sample", "eval", "ocr"}, "config");
    opt(j, "seed", c.seed);
    if (j.contains("data")) {
      const json& d = j["data"];
      reject_unknown(d, {"train_dir", "test_dir"}, "data");
      opt(d, "train_dir", c.data.train_dir);
      opt(d, "test_dir", c.data.test_dir);
    }
    if (j.contains("net")) {
      json merged = c.net;
      reject_unknown(j["net"], {"latent_size", "dim", "n_ceb", "n_fgb", "n_heads", "time_dim", "input_size", "patch"},
                     "net");
      merged.update(j["net"]);
      c.net = merged.get<NetConfig>();
    }
    if (j.contains("schedule")) {
      const json& s = j["schedule"];
      reject_unknown(s, {"T", "beta_start", "beta_end", "eta"}, "schedule");
      opt(s, "T", c.schedule.T);
      opt(s, "beta_start", c.schedule.beta_start);
      opt(s, "beta_end", c.schedule.beta_end);
      opt(s, "eta", c.schedule.eta);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      reject_unknown(t, {"batch_size", "updates", "lr", "rollout_steps", "tvcr", "grad_clip", "log_every",
                         "checkpoint_every"},
                     "train");
      opt(t, "batch_size", c.train.batch_size);
      opt(t, "updates", c.train.updates);
      opt(t, "lr", c.train.lr);
      opt(t, "rollout_steps", c.train.rollout_steps);
      opt(t, "tvcr", c.train.tvcr);
      opt(t, "grad_clip", c.train.grad_clip);
      opt(t, "log_every", c.train.log_every);
      opt(t, "checkpoint_every", c.train.checkpoint_every);
    }
    if (j.contains("sample")) {
      const json& s = j["sample"];
      reject_unknown(s, {"steps", "dual", "tvcr"}, "sample");
      opt(s, "steps", c.sample.steps);
      opt(s, "dual", c.sample.dual);
      opt(s, "tvcr", c.sample.tvcr);
    }
    if (j.contains("eval")) {
      const json& e = j["eval"];
      reject_unknown(e, {"flow", "max_side"}, "eval");
      opt(e, "flow", c.eval.flow);
      opt(e, "max_side", c.eval.max_side);
    }
    if (j.contains("ocr")) {
      const json& o = j["ocr"];
      reject_unknown(o, {"endpoint", "text_endpoint", "concurrency", "timeout_ms"}, "ocr");
      opt(o, "endpoint", c.ocr.endpoint);
      opt(o, "text_endpoint", c.ocr.text_endpoint);
      opt(o, "concurrency", c.ocr.concurrency);
      opt(o, "timeout_ms", c.ocr.timeout_ms);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

NoiseSchedule RunConfig::make_schedule() const {
  return dvd::make_schedule(schedule.T, schedule.beta_start, schedule.beta_end, schedule.eta);
}

TrainerOptions RunConfig::trainer_options() const {
  TrainerOptions o;
  o.batch_size = train.batch_size;
  o.lr = train.lr;
  o.step.rollout_steps = train.rollout_steps;
  o.step.tvcr = train.tvcr;
  o.step.grad_clip = train.grad_clip;
  return o;
}

SamplerOptions RunConfig::sampler_options() const {
  SamplerOptions o;
  o.steps = sample.steps;
  o.tvcr = sample.tvcr;
  return o;
}

void RunConfig::validate() const {
  net.validate();
  make_schedule();
  if (train.batch_size < 1) throw InvalidArgument("train.batch_size must be >= 1");
  if (train.updates < 0) throw InvalidArgument("train.updates must be >= 0");
  if (!(train.lr > 0)) throw InvalidArgument("train.lr must be > 0");
  if (train.rollout_steps < 2) throw InvalidArgument("train.rollout_steps must be >= 2");
  if (train.log_every < 1) throw InvalidArgument("train.log_every must be >= 1");
  if (train.checkpoint_every < 0) throw InvalidArgument("train.checkpoint_every must be >= 0");
  if (sample.steps < 1 || sample.steps > schedule.T) {
    throw InvalidArgument("sample.steps must be in [1, T]");
  }
  if (ocr.concurrency < 1) throw InvalidArgument("ocr.concurrency must be >= 1");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw InvalidArgument("config " + path.string() + " is not valid JSON");
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& c) { return config_hash(json(c)); }

}  // namespace dvd
