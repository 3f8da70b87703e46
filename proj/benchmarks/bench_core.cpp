#include <benchmark/benchmark.h>

#include "dvd/diffusion.hpp"
#include "dvd/metrics.hpp"
#include "dvd/synth.hpp"

using namespace dvd;

namespace {

SampleRecord bench_record(int size) {
  return make_sample("bench", DomainTags{}, size, 32, 7);
}

void BM_ApplyBackwardMapping(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SampleRecord rec = bench_record(size);
  for (auto _ : state) benchmark::DoNotOptimize(apply_backward_mapping(rec.warped, rec.gt_map_full, 0.0f));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_ApplyBackwardMapping)->Arg(128)->Arg(256)->Arg(512);

void BM_UpsampleMapping(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SampleRecord rec = bench_record(128);
  for (auto _ : state) benchmark::DoNotOptimize(upsample_mapping(rec.gt_map_latent, size, size));
}
BENCHMARK(BM_UpsampleMapping)->Arg(128)->Arg(512);

void BM_MsSsim(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SampleRecord rec = bench_record(size);
  for (auto _ : state) benchmark::DoNotOptimize(ms_ssim(rec.warped, rec.flat));
}
BENCHMARK(BM_MsSsim)->Arg(256)->Arg(512);

void BM_DistortionMetrics(benchmark::State& state) {
  const SampleRecord rec = bench_record(static_cast<int>(state.range(0)));
  const auto flow = make_flow_backend("dis");
  for (auto _ : state) benchmark::DoNotOptimize(distortion_metrics(rec.warped, rec.flat, *flow));
}
BENCHMARK(BM_DistortionMetrics)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_EditDistance(benchmark::State& state) {
  const std::string a(static_cast<std::size_t>(state.range(0)), 'a');
  std::string b = a;
  for (std::size_t i = 0; i < b.size(); i += 7) b[i] = 'b';
  for (auto _ : state) benchmark::DoNotOptimize(edit_distance(a, b));
}
BENCHMARK(BM_EditDistance)->Arg(256)->Arg(2048);

void BM_NetForward(benchmark::State& state) {
  torch::NoGradGuard ng;
  torch::manual_seed(0);
  DvdNet net(NetConfig::toy());
  net->eval();
  const NetConfig& c = net->config();
  const int64_t B = state.range(0);
  Rng rng(1);
  const ConditionBundle cond = net->encode(torch::rand({B, 3, c.input_size, c.input_size}),
                                           torch::ones({B, 1, c.input_size, c.input_size}),
                                           torch::zeros({B, 1, c.input_size, c.input_size}));
  const torch::Tensor m = rng.normal_tensor({B, 2, c.latent_size, c.latent_size});
  const torch::Tensor t = torch::full({B}, 500, torch::kInt64);
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(m, t, cond));
}
BENCHMARK(BM_NetForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Sample(benchmark::State& state) {
  torch::manual_seed(0);
  DvdNet net(NetConfig::toy());
  const NetConfig& c = net->config();
  const NetInputs in{torch::rand({1, 3, c.input_size, c.input_size}), torch::ones({1, 1, c.input_size, c.input_size}),
                     torch::zeros({1, 1, c.input_size, c.input_size})};
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02, 0.0);
  SamplerOptions o;
  o.steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Rng rng(2);
    benchmark::DoNotOptimize(predict_mappings(net, in, s, o, false, rng));
  }
}
BENCHMARK(BM_Sample)->Arg(1)->Arg(3)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const NetConfig c = NetConfig::toy();
  CorpusOptions co;
  co.count = 16;
  co.size = c.input_size;
  co.latent_size = c.latent_size;
  const TrainingSet data = make_training_set(generate_corpus(co), c.input_size);
  TrainerOptions o;
  o.batch_size = static_cast<int>(state.range(0));
  o.lr = 1e-4;
  Trainer tr(c, make_schedule(1000, 1e-4, 0.02, 0.0), o, 3);
  for (auto _ : state) benchmark::DoNotOptimize(tr.step(data));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
