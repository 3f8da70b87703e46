#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "dvd/checkpoint.hpp"
#include "dvd/commands.hpp"
#include "dvd/dataset.hpp"
#include "dvd/image_io.hpp"
#include "dvd/ingest.hpp"
#include "dvd/mapping_io.hpp"
#include "dvd/report.hpp"

using namespace dvd;
using nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dvd_commands_test";

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

// Relative path -> bytes for every regular file under `dir`.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DVD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kTinyConfig = R"({
  "seed": 3,
  "net": {"latent_size": 8, "dim": 8, "n_ceb": 1, "n_fgb": 1, "n_heads": 2, "time_dim": 8, "input_size": 64, "patch": 2},
  "schedule": {"T": 100},
  "train": {"batch_size": 2, "lr": 1e-3, "updates": 6, "log_every": 2}
})";

class EchoOcr final : public OcrClient {
 public:
  // Same transcript for every image, so pred == gt scores zero.
  std::string transcribe(const DocumentImage&) override { return "fixed text"; }
  std::string id() const override { return "echo"; }
};

class Commands : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    spit(kRoot / "tiny.json", kTinyConfig);
    SynthArgs s;
    s.out = kRoot / "data";
    s.count = 6;
    s.size = 64;
    s.latent = 8;
    s.seed = 5;
    cmd_synth(s);
    TrainArgs t;
    t.data = kRoot / "data";
    t.config = kRoot / "tiny.json";
    t.ckpt_out = kRoot / "model.dvdc";
    t.quiet = true;
    cmd_train(t);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Commands, SynthIsByteIdenticalAcrossRuns) {
  SynthArgs s;
  s.out = kRoot / "again";
  s.count = 6;
  s.size = 64;
  s.latent = 8;
  s.seed = 5;
  const std::string h = cmd_synth(s);
  EXPECT_EQ(tree(kRoot / "data"), tree(kRoot / "again"));
  EXPECT_EQ(h, read_dataset(kRoot / "again").info.config_hash);
  EXPECT_THROW(cmd_synth(s), InvalidArgument);
  s.force = true;
  s.seed = 6;
  EXPECT_NE(cmd_synth(s), h);
  fs::remove_all(kRoot / "again");
}

TEST_F(Commands, SynthIndexCountsRecords) {
  SynthArgs s;
  s.out = kRoot / "count";
  s.count = 48;
  s.size = 64;
  s.latent = 8;
  s.layouts = {"two_column"};
  cmd_synth(s);
  const json idx = json::parse(slurp(kRoot / "count" / "index.json"));
  EXPECT_EQ(idx.at("ids").size(), 48u);
  for (const auto& [id, tags] : read_domain_index(kRoot / "count")) EXPECT_EQ(tags.layout, Layout::TwoColumn);
  fs::remove_all(kRoot / "count");
}

TEST_F(Commands, CliExitCodes) {
  const std::string root = kRoot.string();
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("synth --out " + root + "/x --count 0"), 2);
  EXPECT_EQ(run_cli("synth --out " + root + "/x --count 2 --bogus"), 2);
  EXPECT_EQ(run_cli("synth --out " + root + "/data --count 2"), 2);
  EXPECT_EQ(run_cli("synth --out " + root + "/x --count 2 --layouts nope"), 2);
  EXPECT_EQ(run_cli("train --data " + root + "/nowhere --ckpt-out " + root + "/c.dvdc"), 3);
  spit(kRoot / "bad.dvdc", "DVDC garbage");
  EXPECT_EQ(run_cli("dewarp --ckpt " + root + "/bad.dvdc --input " + root + "/data --output " + root + "/o"), 3);
  spit(kRoot / "unknown.json", R"({"trian": {}})");
  EXPECT_EQ(run_cli("train --data " + root + "/data --config " + root + "/unknown.json --ckpt-out " + root + "/c.dvdc"),
            2);
  spit(kRoot / "nan.json",
       R"({"net": {"latent_size": 8, "dim": 8, "n_ceb": 1, "n_fgb": 1, "n_heads": 2, "time_dim": 8,
                   "input_size": 64, "patch": 2},
           "train": {"batch_size": 2, "lr": 1e30, "grad_clip": 1e30, "updates": 200}})");
  EXPECT_EQ(run_cli("train --data " + root + "/data --config " + root + "/nan.json --ckpt-out " + root +
                    "/nan.dvdc --quiet"),
            4);
  const std::string log = slurp(kRoot / "nan.dvdc.log.jsonl");
  EXPECT_NE(log.find("non-finite loss"), std::string::npos) << log;
  EXPECT_EQ(run_cli("eval --pred " + root + "/data/samples/" + " --gt " + root + "/nowhere --report-out " + root + "/r"),
            2);
}

TEST_F(Commands, EvalUnreachableOcrExitsFiveAfterWritingReport) {
  const fs::path pred = kRoot / "ocr_pred";
  fs::create_directories(pred);
  const json idx = json::parse(slurp(kRoot / "data" / "index.json"));
  for (const auto& id : idx.at("ids")) {
    fs::copy_file(kRoot / "data" / "samples" / id.get<std::string>() / "warped.png",
                  pred / (id.get<std::string>() + ".png"), fs::copy_options::overwrite_existing);
  }
  const std::string r = (kRoot / "ocr_rep").string();
  EXPECT_EQ(run_cli("eval --pred " + pred.string() + " --gt " + (kRoot / "data").string() + " --report-out " + r +
                    " --ocr-endpoint http://127.0.0.1:1/ocr --timestamp t"),
            5);
  const json rep = json::parse(slurp(kRoot / "ocr_rep" / "report.json"));
  EXPECT_TRUE(rep["per_sample"][0]["mmed"].is_null());
  EXPECT_FALSE(rep["per_sample"][0]["errors"].empty());
}

TEST_F(Commands, TrainIsDeterministicAndResumable) {
  TrainArgs t;
  t.data = kRoot / "data";
  t.config = kRoot / "tiny.json";
  t.ckpt_out = kRoot / "model2.dvdc";
  t.quiet = true;
  cmd_train(t);
  EXPECT_EQ(slurp(kRoot / "model.dvdc"), slurp(kRoot / "model2.dvdc"));

  t.ckpt_out = kRoot / "half.dvdc";
  t.updates = 3;
  cmd_train(t);
  t.updates = 6;
  t.resume = kRoot / "half.dvdc";
  t.ckpt_out = kRoot / "resumed.dvdc";
  t.log = kRoot / "half.dvdc.log.jsonl";
  cmd_train(t);
  EXPECT_EQ(slurp(kRoot / "model.dvdc"), slurp(kRoot / "resumed.dvdc"));

  // The stored config names the dataset by hash, not by path.
  const LoadedCheckpoint lc = load_checkpoint(kRoot / "model.dvdc");
  EXPECT_FALSE(lc.meta.run_config.contains("data"));
  EXPECT_EQ(lc.meta.run_config["dataset_hash"], read_dataset(kRoot / "data").info.config_hash);
  EXPECT_EQ(lc.trainer->updates(), 6);

  std::ifstream log(kRoot / "model.dvdc.log.jsonl");
  std::string line;
  std::vector<json> rows;
  while (std::getline(log, line)) rows.push_back(json::parse(line));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows.back()["update"], 6);
  for (const char* k : {"loss", "loss_mean", "t", "refined", "seconds"}) EXPECT_TRUE(rows[0].contains(k)) << k;

  spit(kRoot / "other.json", std::string(kTinyConfig).replace(std::string(kTinyConfig).find("1e-3"), 4, "2e-3"));
  t.config = kRoot / "other.json";
  EXPECT_THROW(cmd_train(t), InvalidArgument);
}

TEST_F(Commands, DewarpIsDeterministic) {
  DewarpArgs d;
  d.ckpt = kRoot / "model.dvdc";
  d.input = kRoot / "data";
  d.output = kRoot / "pred_a";
  cmd_dewarp(d);
  d.output = kRoot / "pred_b";
  cmd_dewarp(d);
  auto a = tree(kRoot / "pred_a"), b = tree(kRoot / "pred_b");
  ASSERT_EQ(a.size(), 18u);
  for (auto& [name, bytes] : a) {
    if (name.ends_with(".json")) {
      json ja = json::parse(bytes), jb = json::parse(b.at(name));
      ja.erase("seconds");
      jb.erase("seconds");
      EXPECT_EQ(ja, jb) << name;
      EXPECT_EQ(ja["steps"], 3);
    } else {
      EXPECT_EQ(bytes, b.at(name)) << name;
    }
  }
  const GridMapping m = read_dvdm(kRoot / "pred_a" / (a.begin()->first.substr(0, a.begin()->first.find('.')) + ".dvdm"));
  EXPECT_EQ(m.height(), 8);
  d.seed = 99;
  d.output = kRoot / "pred_c";
  cmd_dewarp(d);
  EXPECT_NE(tree(kRoot / "pred_a"), tree(kRoot / "pred_c"));
}

TEST_F(Commands, DewarpAcceptsPlainImages) {
  fs::create_directories(kRoot / "plain");
  const auto rec = read_sample(kRoot / "data" / "samples" / read_domain_index(kRoot / "data").front().first);
  write_png(kRoot / "plain" / "page.png", rec.warped);
  DewarpArgs d;
  d.ckpt = kRoot / "model.dvdc";
  d.input = kRoot / "plain" / "page.png";
  d.output = kRoot / "plain_out";
  d.steps = 1;
  d.dual = true;
  cmd_dewarp(d);
  const json side = json::parse(slurp(kRoot / "plain_out" / "page.json"));
  EXPECT_EQ(side["steps"], 1);
  EXPECT_EQ(side["dual"], true);
  EXPECT_EQ(side["masks"], "estimated");
  EXPECT_EQ(read_png(kRoot / "plain_out" / "page.png").height(), 64);
  d.steps = 0;
  EXPECT_THROW(cmd_dewarp(d), InvalidArgument);
}

TEST_F(Commands, EvalOfGroundTruthIsPerfect) {
  const fs::path pred = kRoot / "gt_pred";
  fs::create_directories(pred);
  const auto ids = read_domain_index(kRoot / "data");
  for (const auto& [id, tags] : ids) {
    fs::copy_file(kRoot / "data" / "samples" / id / "flat.png", pred / (id + ".png"),
                  fs::copy_options::overwrite_existing);
  }
  EchoOcr ocr;
  EvalArgs e;
  e.pred = pred;
  e.gt = kRoot / "data";
  e.report_out = kRoot / "gt_rep";
  e.timestamp = "2026-01-01T00:00:00Z";
  e.ocr_client = &ocr;
  e.text_ocr_client = &ocr;
  cmd_eval(e);
  const json rep = json::parse(slurp(kRoot / "gt_rep" / "report.json"));
  const json& mean = rep["aggregates"]["overall"]["mean"];
  EXPECT_NEAR(mean["ms_ssim"].get<double>(), 1.0, 1e-9);
  EXPECT_LE(mean["ld"].get<double>(), 0.1);
  EXPECT_EQ(mean["ed"].get<double>(), 0.0);
  EXPECT_EQ(mean["mmed"].get<double>(), 0.0);
  EXPECT_EQ(mean["mmcer"].get<double>(), 0.0);
  EXPECT_EQ(rep["per_sample"].size(), ids.size());
  EXPECT_EQ(rep["meta"]["backends"]["mllm_ocr"], "echo");
  EXPECT_TRUE(fs::exists(kRoot / "gt_rep" / "plot_warp_kind.svg"));

  // Same inputs, same bytes.
  const std::string first = slurp(kRoot / "gt_rep" / "report.json");
  cmd_eval(e);
  EXPECT_EQ(first, slurp(kRoot / "gt_rep" / "report.json"));

  fs::remove(pred / (ids.front().first + ".png"));
  try {
    cmd_eval(e);
    FAIL() << "expected FormatError";
  } catch (const FormatError& err) {
    EXPECT_NE(std::string(err.what()).find(ids.front().first), std::string::npos);
    EXPECT_NE(std::string(err.what()).find("only in gt"), std::string::npos);
  }
}

TEST_F(Commands, EvalRejectsMixedConfigs) {
  DewarpArgs d;
  d.ckpt = kRoot / "model.dvdc";
  d.input = kRoot / "data";
  d.output = kRoot / "mixed";
  cmd_dewarp(d);
  const auto ids = read_domain_index(kRoot / "data");
  const fs::path side = kRoot / "mixed" / (ids.front().first + ".json");
  json j = json::parse(slurp(side));
  j["config_hash"] = "0000000000000000";
  spit(side, j.dump());
  EvalArgs e;
  e.pred = kRoot / "mixed";
  e.gt = kRoot / "data";
  e.report_out = kRoot / "mixed_rep";
  e.timestamp = "t";
  EXPECT_THROW(cmd_eval(e), FormatError);
  e.allow_mixed = true;
  cmd_eval(e);
  const json rep = json::parse(slurp(kRoot / "mixed_rep" / "report.json"));
  EXPECT_EQ(rep["meta"]["config_hash"], "mixed");
  EXPECT_EQ(rep["meta"]["prediction_config_hashes"].size(), 2u);
}

TEST_F(Commands, IngestPairsByConvention) {
  const fs::path dir = kRoot / "bench";
  const DocumentImage img(64, 48, 3, 0.5f);
  for (const char* p : {"scan/1.png", "scan/2.png", "crop/1_1.png", "crop/1_2.png", "crop/2_1.png", "crop/2_2.jpg"}) {
    fs::create_directories((dir / p).parent_path());
    write_png(dir / p, img);
  }
  IngestArgs a{dir, "docunet_style", kRoot / "ingested"};
  cmd_ingest(a);
  const json pairs = json::parse(slurp(kRoot / "ingested" / "pairs.json"));
  ASSERT_EQ(pairs["pairs"].size(), 4u);
  EXPECT_EQ(pairs["pairs"][0]["id"], "1_1");
  EXPECT_EQ(pairs["pairs"][3]["id"], "2_2");
  EXPECT_TRUE(fs::exists(kRoot / "ingested" / "input" / "2_2.png"));
  EXPECT_TRUE(fs::exists(kRoot / "ingested" / "gt" / "1_2.png"));
  const auto first = tree(kRoot / "ingested");
  a.out = kRoot / "ingested2";
  cmd_ingest(a);
  EXPECT_EQ(first, tree(kRoot / "ingested2"));

  write_png(dir / "crop" / "9_1.png", img);
  try {
    ingest_external_benchmark(dir, BenchmarkLayout::DocunetStyle);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("9_1.png"), std::string::npos) << e.what();
  }
  spit(dir / "manifest.json", R"({"pairs": [{"id": "a", "distorted": "crop/9_1.png", "gt": "scan/1.png"}]})");
  const auto m = ingest_external_benchmark(dir, BenchmarkLayout::DocunetStyle);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].id, "a");
  EXPECT_THROW(parse_benchmark_layout("docunet"), InvalidArgument);
}

TEST(Masks, EstimatedMasksFindPageAndText) {
  DocumentImage img(96, 96, 3, 0.05f);
  for (int r = 16; r < 80; ++r)
    for (int c = 16; c < 80; ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = 0.9f;
  for (int r = 30; r < 34; ++r)
    for (int c = 24; c < 72; ++c)
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = 0.1f;
  const EstimatedMasks m = estimate_masks(img);
  EXPECT_EQ(m.fg.at(48, 48), 1.0f);
  EXPECT_EQ(m.fg.at(4, 4), 0.0f);
  EXPECT_EQ(m.fg.at(32, 48), 1.0f);
  EXPECT_EQ(m.textline.at(32, 48), 1.0f);
  EXPECT_EQ(m.textline.at(60, 48), 0.0f);
  EXPECT_EQ(m.textline.at(4, 4), 0.0f);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  const fs::path p = fs::temp_directory_path() / "dvd_cfg_test.json";
  spit(p, R"({"train": {"batch_size": 4, "lerning_rate": 1}})");
  EXPECT_THROW(load_run_config(p), InvalidArgument);
  spit(p, R"({"train": {"batch_size": 0}})");
  EXPECT_THROW(load_run_config(p), InvalidArgument);
  spit(p, R"({"train": {"batch_size": 4}, "net": {"dim": 32}})");
  const RunConfig c = load_run_config(p);
  EXPECT_EQ(c.train.batch_size, 4);
  EXPECT_EQ(c.net.dim, 32);
  EXPECT_EQ(c.net.n_ceb, NetConfig{}.n_ceb);
  EXPECT_EQ(config_hash(c), config_hash(load_run_config(p)));
  spit(p, "{not json");
  EXPECT_THROW(load_run_config(p), InvalidArgument);
  spit(p, R"({"train": {"batch_size": "four"}})");
  EXPECT_THROW(load_run_config(p), InvalidArgument);
  fs::remove(p);
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(InvalidArgument("x")), 2);
  EXPECT_EQ(exit_code_for(FormatError("x")), 3);
  EXPECT_EQ(exit_code_for(TrainingError("x")), 4);
  EXPECT_EQ(exit_code_for(ServiceError("x")), 5);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 1);
}
