#include <iostream>

#include <CLI11.hpp>

#include "dvd/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Coordinate-space diffusion for document dewarping"};
  app.require_subcommand(1);

  dvd::SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic corpus");
  s->add_option("--out", synth.out)->required();
  s->add_option("--count", synth.count)->required();
  s->add_option("--size", synth.size, "image side in pixels")->capture_default_str();
  s->add_option("--latent", synth.latent, "latent mapping side")->capture_default_str();
  s->add_option("--layouts", synth.layouts, "single_column,two_column,complex")->delimiter(',');
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_flag("--force", synth.force, "replace a non-empty output directory");

  dvd::TrainArgs train;
  std::string train_config, resume, log;
  std::int64_t updates = -1;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "train a denoiser");
  t->add_option("--data", train.data)->required();
  t->add_option("--config", train_config);
  t->add_option("--ckpt-out", train.ckpt_out)->required();
  auto* upd_opt = t->add_option("--updates", updates);
  auto* seed_opt = t->add_option("--seed", train_seed);
  t->add_option("--resume", resume, "continue from this checkpoint");
  t->add_option("--log", log, "JSONL training log");
  t->add_flag("--quiet", train.quiet);

  dvd::DewarpArgs dewarp;
  int steps = 0;
  bool dual = false, single = false;
  std::uint64_t dewarp_seed = 0;
  auto* d = app.add_subcommand("dewarp", "rectify images with a trained checkpoint");
  d->add_option("--ckpt", dewarp.ckpt)->required();
  d->add_option("--input", dewarp.input, "dataset root, image directory or image")->required();
  d->add_option("--output", dewarp.output)->required();
  auto* steps_opt = d->add_option("--steps", steps);
  auto* dual_opt = d->add_flag("--dual", dual, "average two hypotheses");
  auto* single_opt = d->add_flag("--single", single, "one hypothesis even if the config says dual");
  dual_opt->excludes(single_opt);
  auto* dseed_opt = d->add_option("--seed", dewarp_seed);

  dvd::EvalArgs eval;
  std::string domains, eval_config, ocr, text_ocr, flow;
  int max_side = 0;
  auto* e = app.add_subcommand("eval", "score dewarped images against ground truth");
  e->add_option("--pred", eval.pred)->required();
  e->add_option("--gt", eval.gt)->required();
  e->add_option("--domains", domains, "dataset root with domain tags");
  e->add_option("--report-out", eval.report_out)->required();
  e->add_option("--config", eval_config);
  e->add_option("--ocr-endpoint", ocr, "MLLM OCR service (MMED/MMCER)");
  e->add_option("--text-ocr-endpoint", text_ocr, "plain OCR service (ED/CER)");
  e->add_option("--flow", flow, "dis or farneback");
  auto* ms_opt = e->add_option("--max-side", max_side, "resolution cap, 0 for full resolution");
  e->add_flag("--allow-mixed", eval.allow_mixed);
  e->add_option("--timestamp", eval.timestamp, "fixed report timestamp");

  dvd::IngestArgs ingest;
  auto* g = app.add_subcommand("ingest", "pair an external benchmark for evaluation");
  g->add_option("--dir", ingest.dir)->required();
  g->add_option("--layout", ingest.layout, "docunet_style or dir300_style")->required();
  g->add_option("--out", ingest.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*s) {
      std::cout << dvd::cmd_synth(synth) << "\n";
    } else if (*t) {
      if (!train_config.empty()) train.config = train_config;
      if (!resume.empty()) train.resume = resume;
      if (!log.empty()) train.log = log;
      if (*upd_opt) train.updates = updates;
      if (*seed_opt) train.seed = train_seed;
      dvd::cmd_train(train);
    } else if (*d) {
      if (*steps_opt) dewarp.steps = steps;
      if (*dual_opt) dewarp.dual = true;
      if (*single_opt) dewarp.dual = false;
      if (*dseed_opt) dewarp.seed = dewarp_seed;
      dvd::cmd_dewarp(dewarp);
    } else if (*e) {
      if (!domains.empty()) eval.domains = domains;
      if (!eval_config.empty()) eval.config = eval_config;
      if (!ocr.empty()) eval.ocr_endpoint = ocr;
      if (!text_ocr.empty()) eval.text_ocr_endpoint = text_ocr;
      if (!flow.empty()) eval.flow = flow;
      if (*ms_opt) eval.max_side = max_side;
      dvd::cmd_eval(eval);
    } else if (*g) {
      dvd::cmd_ingest(ingest);
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return dvd::exit_code_for(ex);
  }
  return 0;
}
