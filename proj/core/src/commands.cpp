#include "dvd/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <opencv2/imgproc.hpp>

#include "dvd/checkpoint.hpp"
#include "dvd/dataset.hpp"
#include "dvd/errors.hpp"
#include "dvd/image_io.hpp"
#include "dvd/ingest.hpp"
#include "dvd/mapping_io.hpp"
#include "dvd/metrics.hpp"
#include "dvd/report.hpp"

namespace dvd {

using nlohmann::json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvalidArgument*>(&e) || dynamic_cast<const ScheduleError*>(&e)) return 2;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const AggregationError*>(&e) ||
      dynamic_cast<const GenerationError*>(&e) || dynamic_cast<const ConvergenceError*>(&e)) {
    return 3;
  }
  if (dynamic_cast<const TrainingError*>(&e)) return 4;
  if (dynamic_cast<const ServiceError*>(&e)) return 5;
  return 1;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_json_file(const fs::path& p, const json& j) {
  std::ofstream out(p, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw FormatError("cannot write " + p.string());
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw FormatError(p.string() + ": cannot open");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(p.string() + ": invalid JSON");
  return j;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool is_image_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".png" || ext == ".PNG" || ext == ".jpg" || ext == ".jpeg";
}

// Sorted id -> image path for a flat directory of images.
std::map<std::string, fs::path> image_dir(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) out[e.path().stem().string()] = e.path();
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string cmd_synth(const SynthArgs& a) {
  if (a.out.empty()) throw InvalidArgument("--out is required");
  if (a.count < 1) throw InvalidArgument("--count must be >= 1");
  if (a.size < 64) throw InvalidArgument("--size must be >= 64");
  if (a.latent < 2 || a.latent > a.size) throw InvalidArgument("--latent must be in [2, size]");
  CorpusOptions co;
  co.count = a.count;
  co.size = a.size;
  co.latent_size = a.latent;
  co.seed = a.seed;
  if (!a.layouts.empty()) {
    co.layouts.clear();
    for (const auto& l : a.layouts) co.layouts.push_back(parse_layout(l));
  }
  if (fs::exists(a.out) && !(fs::is_directory(a.out) && fs::is_empty(a.out))) {
    if (!a.force) throw InvalidArgument(a.out.string() + " exists and is not empty (use --force)");
    fs::remove_all(a.out);
  }
  json layouts = json::array();
  for (Layout l : co.layouts) layouts.push_back(to_string(l));
  const json cfg{{"count", a.count}, {"size", a.size}, {"latent", a.latent}, {"layouts", layouts}, {"seed", a.seed}};
  DatasetInfo info{a.latent, a.seed, config_hash(cfg)};
  write_dataset(generate_corpus(co), a.out, info);
  return info.config_hash;
}

// ---------------------------------------------------------------------------

json resolved_train_config(const RunConfig& cfg, const std::string& dataset_hash) {
  json j = cfg;
  j.erase("data");
  j["dataset_hash"] = dataset_hash;
  return j;
}

namespace {

json without_updates(json j) {
  j.erase("data");
  j.erase("dataset_hash");
  if (j.contains("train")) j["train"].erase("updates");
  return j;
}

}  // namespace

void cmd_train(const TrainArgs& a) {
  if (a.data.empty() || a.ckpt_out.empty()) throw InvalidArgument("--data and --ckpt-out are required");
  RunConfig cfg = a.config ? load_run_config(*a.config) : RunConfig{};
  if (a.updates) cfg.train.updates = *a.updates;
  if (a.seed) cfg.seed = *a.seed;
  cfg.data.train_dir = a.data.string();
  cfg.validate();

  const Dataset ds = read_dataset(a.data);
  if (ds.info.latent_size != cfg.net.latent_size) {
    throw InvalidArgument("net.latent_size " + std::to_string(cfg.net.latent_size) + " does not match dataset latent size " +
                          std::to_string(ds.info.latent_size));
  }
  const json resolved = resolved_train_config(cfg, ds.info.config_hash);
  const CheckpointMeta meta{resolved, config_hash(resolved)};
  const TrainingSet data = make_training_set(ds.records, cfg.net.input_size);

  std::unique_ptr<Trainer> trainer;
  if (a.resume) {
    LoadedCheckpoint lc = load_checkpoint(*a.resume);
    if (without_updates(lc.meta.run_config) != without_updates(resolved)) {
      throw InvalidArgument("resume: checkpoint " + a.resume->string() + " was trained with a different config");
    }
    if (lc.meta.run_config.value("dataset_hash", "") != ds.info.config_hash) {
      throw InvalidArgument("resume: checkpoint was trained on a different dataset");
    }
    trainer = std::move(lc.trainer);
  } else {
    trainer = std::make_unique<Trainer>(cfg.net, cfg.make_schedule(), cfg.trainer_options(), cfg.seed);
  }

  const fs::path log_path = a.log ? *a.log : fs::path(a.ckpt_out.string() + ".log.jsonl");
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  if (a.ckpt_out.has_parent_path()) fs::create_directories(a.ckpt_out.parent_path());
  std::ofstream log(log_path, a.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw FormatError("cannot open training log " + log_path.string());

  const auto start = std::chrono::steady_clock::now();
  double window = 0.0;
  int in_window = 0;
  while (trainer->updates() < cfg.train.updates) {
    StepResult r;
    try {
      r = trainer->step(data);
    } catch (const TrainingError& e) {
      log << json{{"update", trainer->updates() + 1}, {"error", e.what()}}.dump() << "\n";
      throw;
    }
    window += r.loss;
    ++in_window;
    const std::int64_t u = trainer->updates();
    if (u % cfg.train.log_every == 0 || u == cfg.train.updates) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const json row{{"update", u}, {"loss", r.loss}, {"loss_mean", window / in_window}, {"t", r.t},
                     {"refined", r.refined}, {"seconds", secs}};
      log << row.dump() << "\n" << std::flush;
      if (!a.quiet) std::cerr << row.dump() << "\n";
      window = 0.0;
      in_window = 0;
    }
    if (cfg.train.checkpoint_every > 0 && u % cfg.train.checkpoint_every == 0 && u < cfg.train.updates) {
      save_checkpoint(a.ckpt_out, *trainer, meta);
    }
  }
  save_checkpoint(a.ckpt_out, *trainer, meta);
}

// ---------------------------------------------------------------------------

EstimatedMasks estimate_masks(const DocumentImage& img) {
  const DocumentImage g = to_gray(img);
  cv::Mat m(g.height(), g.width(), CV_8UC1);
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      m.at<std::uint8_t>(r, c) = static_cast<std::uint8_t>(std::lround(std::clamp(g.at(r, c), 0.0f, 1.0f) * 255));
    }
  }
  cv::Mat fg, text;
  cv::threshold(m, fg, 0, 255, cv::THRESH_BINARY | cv::THRESH_OTSU);
  // Close the text holes inside the page.
  const int k = std::max(3, std::min(g.height(), g.width()) / 16) | 1;
  cv::morphologyEx(fg, fg, cv::MORPH_CLOSE, cv::getStructuringElement(cv::MORPH_RECT, {k, k}));
  const int block = std::max(3, std::min(g.height(), g.width()) / 8) | 1;
  cv::adaptiveThreshold(m, text, 255, cv::ADAPTIVE_THRESH_MEAN_C, cv::THRESH_BINARY_INV, block, 10);
  cv::bitwise_and(text, fg, text);
  cv::morphologyEx(text, text, cv::MORPH_CLOSE,
                   cv::getStructuringElement(cv::MORPH_RECT, {std::max(3, g.width() / 20) | 1, 1}));
  EstimatedMasks out{DocumentImage(g.height(), g.width(), 1), DocumentImage(g.height(), g.width(), 1)};
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      out.fg.at(r, c) = fg.at<std::uint8_t>(r, c) ? 1.0f : 0.0f;
      out.textline.at(r, c) = text.at<std::uint8_t>(r, c) ? 1.0f : 0.0f;
    }
  }
  return out;
}

DocumentImage dewarp_with_latent(const DocumentImage& warped, const GridMapping& latent) {
  const GridMapping full = latent.height() == warped.height() && latent.width() == warped.width()
                               ? latent
                               : upsample_mapping(latent, warped.height(), warped.width());
  return apply_backward_mapping(warped, full, 0.0f);
}

void cmd_dewarp(const DewarpArgs& a) {
  if (a.ckpt.empty() || a.input.empty() || a.output.empty()) {
    throw InvalidArgument("--ckpt, --input and --output are required");
  }
  if (!fs::exists(a.ckpt)) throw InvalidArgument("checkpoint not found: " + a.ckpt.string());
  if (!fs::exists(a.input)) throw InvalidArgument("input not found: " + a.input.string());
  LoadedCheckpoint lc = load_checkpoint(a.ckpt);
  RunConfig cfg;
  {
    json j = lc.meta.run_config;
    j.erase("dataset_hash");
    cfg = j.get<RunConfig>();
  }
  SamplerOptions so = cfg.sampler_options();
  if (a.steps) so.steps = *a.steps;
  const bool dual = a.dual.value_or(cfg.sample.dual);
  const std::uint64_t seed = a.seed.value_or(cfg.seed);
  if (so.steps < 1 || so.steps > cfg.schedule.T) throw InvalidArgument("--steps must be in [1, T]");

  struct Item {
    std::string id;
    fs::path image, fg, textline;  // masks empty: estimate
  };
  std::vector<Item> items;
  if (fs::is_regular_file(a.input)) {
    items.push_back({a.input.stem().string(), a.input, {}, {}});
  } else if (fs::exists(a.input / "index.json")) {
    const json idx = read_json_file(a.input / "index.json");
    for (const auto& id : idx.at("ids")) {
      const fs::path d = a.input / "samples" / id.get<std::string>();
      items.push_back({id.get<std::string>(), d / "warped.png", d / "fg_mask.png", d / "textline.png"});
    }
  } else {
    for (const auto& [id, p] : image_dir(a.input)) items.push_back({id, p, {}, {}});
  }
  if (items.empty()) throw InvalidArgument("no input images under " + a.input.string());

  fs::create_directories(a.output);
  DvdNet& net = lc.trainer->net();
  const NoiseSchedule& sched = lc.trainer->schedule();
  for (const Item& it : items) {
    const DocumentImage img = read_png(it.image, 3);
    DocumentImage fg, tl;
    if (it.fg.empty()) {
      EstimatedMasks em = estimate_masks(img);
      fg = std::move(em.fg);
      tl = std::move(em.textline);
    } else {
      fg = read_png(it.fg, 1);
      tl = read_png(it.textline, 1);
    }
    Rng rng(derive_seed(seed, fnv1a(it.id)));
    const auto t0 = std::chrono::steady_clock::now();
    const NetInputs in = make_net_inputs({&img}, {&fg}, {&tl}, cfg.net.input_size);
    const torch::Tensor m = predict_mappings(net, in, sched, so, dual, rng);
    const GridMapping latent = tensor_to_mapping(m[0]);
    const DocumentImage out = dewarp_with_latent(img, latent);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_png(a.output / (it.id + ".png"), out);
    write_dvdm(a.output / (it.id + ".dvdm"), latent);
    write_json_file(a.output / (it.id + ".json"), json{{"id", it.id},
                                                       {"config_hash", lc.meta.config_hash},
                                                       {"steps", so.steps},
                                                       {"dual", dual},
                                                       {"seed", seed},
                                                       {"masks", it.fg.empty() ? "estimated" : "dataset"},
                                                       {"seconds", secs}});
  }
}

// ---------------------------------------------------------------------------

void cmd_eval(const EvalArgs& a) {
  if (a.pred.empty() || a.gt.empty() || a.report_out.empty()) {
    throw InvalidArgument("--pred, --gt and --report-out are required");
  }
  for (const auto& d : {a.pred, a.gt}) {
    if (!fs::is_directory(d)) throw InvalidArgument("not a directory: " + d.string());
  }
  RunConfig cfg = a.config ? load_run_config(*a.config) : RunConfig{};
  if (a.flow) cfg.eval.flow = *a.flow;
  if (a.max_side) cfg.eval.max_side = *a.max_side;
  if (a.ocr_endpoint) cfg.ocr.endpoint = *a.ocr_endpoint;
  if (a.text_ocr_endpoint) cfg.ocr.text_endpoint = *a.text_ocr_endpoint;

  const auto preds = image_dir(a.pred);
  std::map<std::string, fs::path> gts;
  const bool gt_dataset = fs::exists(a.gt / "index.json");
  if (gt_dataset) {
    const json idx = read_json_file(a.gt / "index.json");
    for (const auto& id : idx.at("ids")) {
      gts[id.get<std::string>()] = a.gt / "samples" / id.get<std::string>() / "flat.png";
    }
  } else {
    gts = image_dir(a.gt);
  }
  std::vector<std::string> only_pred, only_gt;
  for (const auto& [id, p] : preds) {
    if (!gts.count(id)) only_pred.push_back(id);
  }
  for (const auto& [id, p] : gts) {
    if (!preds.count(id)) only_gt.push_back(id);
  }
  if (!only_pred.empty() || !only_gt.empty()) {
    std::string msg = "prediction and ground-truth ids differ;";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg += std::string(" only in ") + what + ":";
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
      if (ids.size() > 20) msg += " ...";
    };
    list("pred", only_pred);
    list("gt", only_gt);
    throw FormatError(msg);
  }
  if (preds.empty()) throw InvalidArgument("no images in " + a.pred.string());

  std::set<std::string> hashes;
  for (const auto& [id, p] : preds) {
    const fs::path side = a.pred / (id + ".json");
    if (fs::exists(side)) hashes.insert(read_json_file(side).value("config_hash", ""));
  }
  if (hashes.size() > 1 && !a.allow_mixed) {
    std::string list;
    for (const auto& h : hashes) list += " " + h;
    throw FormatError("predictions come from different configs (" + list.substr(1) + "); pass --allow-mixed");
  }

  std::map<std::string, DomainTags> domains;
  std::optional<fs::path> dom_root = a.domains;
  if (!dom_root && gt_dataset) dom_root = a.gt;
  if (dom_root) {
    for (auto& [id, t] : read_domain_index(*dom_root)) domains[id] = t;
  }

  const auto flow = make_flow_backend(cfg.eval.flow);
  const DistortionOptions dopts{cfg.eval.max_side};
  std::unique_ptr<OcrClient> mllm_owned, text_owned;
  OcrClient* mllm = a.ocr_client;
  OcrClient* text = a.text_ocr_client;
  auto http = [&](const std::string& ep) {
    OcrOptions o = ocr_options_from_env(ep);
    o.concurrency = cfg.ocr.concurrency;
    o.timeout = std::chrono::milliseconds(cfg.ocr.timeout_ms);
    return std::make_unique<HttpOcrClient>(o);
  };
  if (!mllm && !cfg.ocr.endpoint.empty()) mllm = (mllm_owned = http(cfg.ocr.endpoint)).get();
  if (!text && !cfg.ocr.text_endpoint.empty()) text = (text_owned = http(cfg.ocr.text_endpoint)).get();

  std::vector<SampleMetrics> rows;
  int text_ok = 0, mllm_ok = 0;
  for (const auto& [id, pred_path] : preds) {
    SampleMetrics s;
    s.id = id;
    const DocumentImage gt = read_png(gts.at(id), 3);
    DocumentImage pred = read_png(pred_path, 3);
    if (pred.height() != gt.height() || pred.width() != gt.width()) {
      pred = resize_bilinear(pred, gt.height(), gt.width());
    }
    s["ms_ssim"] = ms_ssim(pred, gt);
    try {
      const Distortion d = distortion_metrics(pred, gt, *flow, dopts);
      s["ld"] = d.ld;
      s["ad"] = d.ad;
    } catch (const std::exception& e) {
      s.errors.push_back(std::string("flow: ") + e.what());
    }
    if (text) {
      const OcrMetrics m = mllm_ocr_metrics(pred, gt, *text);
      s["ed"] = m.mmed;
      s["cer"] = m.mmcer;
      text_ok += m.mmed.has_value();
      if (!m.error.empty()) s.errors.push_back("ocr: " + m.error);
    }
    if (mllm) {
      const OcrMetrics m = mllm_ocr_metrics(pred, gt, *mllm);
      s["mmed"] = m.mmed;
      s["mmcer"] = m.mmcer;
      mllm_ok += m.mmed.has_value();
      if (!m.error.empty()) s.errors.push_back("mllm-ocr: " + m.error);
    }
    rows.push_back(std::move(s));
  }

  ReportMeta meta;
  json eval_cfg{{"eval", json(cfg)["eval"]}, {"ocr_endpoint", cfg.ocr.endpoint}, {"text_endpoint", cfg.ocr.text_endpoint}};
  meta.config_hash = hashes.size() == 1 ? *hashes.begin() : hashes.empty() ? config_hash(eval_cfg) : "mixed";
  meta.timestamp = a.timestamp.empty() ? utc_now() : a.timestamp;
  meta.backends = {{"flow", flow->id()}, {"ms_ssim", "gaussian11-sigma1.5-luma"}};
  if (mllm) meta.backends["mllm_ocr"] = mllm->id();
  if (text) meta.backends["ocr"] = text->id();
  meta.extra = {{"eval_config", eval_cfg}, {"eval_config_hash", config_hash(eval_cfg)}};
  if (hashes.size() > 1) meta.extra["prediction_config_hashes"] = hashes;
  write_report(aggregate_report(std::move(rows), domains, meta), a.report_out);
  // The report is still written; a service that never answered is a run failure.
  if ((text && text_ok == 0) || (mllm && mllm_ok == 0)) {
    throw ServiceError("OCR service produced no transcripts; OCR metrics are unavailable in " +
                       a.report_out.string());
  }
}

// ---------------------------------------------------------------------------

void cmd_ingest(const IngestArgs& a) {
  if (a.dir.empty() || a.out.empty()) throw InvalidArgument("--dir and --out are required");
  write_eval_pairs(ingest_external_benchmark(a.dir, parse_benchmark_layout(a.layout)), a.out);
}

}  // namespace dvd
