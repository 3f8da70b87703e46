#include "dvd/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "dvd/errors.hpp"

namespace dvd {

torch::Tensor NetDenoiser::predict(const torch::Tensor& m_t, int t, const ConditionBundle& cond) {
  return net_->forward(m_t, torch::full({m_t.size(0)}, t, torch::kInt64), cond, streams_);
}

TimeVariantCondition refine_condition(const torch::Tensor& x0_hat, const torch::Tensor& f_d, double clamp) {
  const torch::Tensor m = x0_hat.clamp(-clamp, clamp);
  return {m, warp_feature_grid(f_d, m), true};
}

torch::Tensor sample(Denoiser& denoiser, const ConditionBundle& fixed, const NoiseSchedule& sched,
                     const SamplerOptions& opts, Rng& rng) {
  if (opts.steps < 1) throw InvalidArgument("sample: steps must be >= 1");
  torch::NoGradGuard no_grad;
  const auto B = fixed.batch();
  const auto L = fixed.f_d.size(2);
  torch::Tensor m = rng.normal_tensor({B, 2, L, L});
  const std::vector<int> ts = uniform_timesteps(sched.T(), 1, opts.steps);
  ConditionBundle cond = fixed;
  cond.r = TimeVariantCondition::zeros(B, static_cast<int>(fixed.f_d.size(1)), static_cast<int>(L));
  torch::Tensor x0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    x0 = denoiser.predict(m, t, cond);
    torch::Tensor z;
    if (sched.sigma(t, t_prev) > 0.0) z = rng.normal_tensor({B, 2, L, L});
    m = ddim_step(m, x0, t, t_prev, sched, z);
    if (opts.tvcr) cond.r = refine_condition(x0, fixed.f_d, opts.condition_clamp);
  }
  return x0;
}

torch::Tensor dual_hypothesis_sample(Denoiser& denoiser, const ConditionBundle& fixed,
                                     const NoiseSchedule& sched, const SamplerOptions& opts,
                                     Rng& first, Rng& second) {
  const torch::Tensor a = sample(denoiser, fixed, sched, opts, first);
  const torch::Tensor b = sample(denoiser, fixed, sched, opts, second);
  return (a + b) * 0.5;
}

torch::Tensor dual_hypothesis_sample(Denoiser& denoiser, const ConditionBundle& fixed,
                                     const NoiseSchedule& sched, const SamplerOptions& opts, Rng& rng) {
  Rng first(rng.split()), second(rng.split());
  return dual_hypothesis_sample(denoiser, fixed, sched, opts, first, second);
}

torch::Tensor diffusion_loss(const torch::Tensor& m0, const torch::Tensor& x0_hat) {
  if (!m0.sizes().equals(x0_hat.sizes())) throw InvalidArgument("diffusion_loss: shape mismatch");
  return (m0 - x0_hat).pow(2).mean();
}

StepResult tvcr_train_step(DvdNet& net, torch::optim::Optimizer& opt, const TrainBatch& batch,
                           const NoiseSchedule& sched, const TrainOptions& opts, Rng& rng) {
  if (opts.rollout_steps < 2) throw InvalidArgument("tvcr_train_step: rollout_steps must be >= 2");
  const int T = sched.T();
  const auto B = batch.m0.size(0);
  const int L = static_cast<int>(batch.m0.size(2));
  StepResult res;
  res.t = rng.uniform_int(1, T);

  ConditionBundle cond = net->encode(batch.images, batch.fg_masks, batch.textline_masks);
  if (opts.tvcr && res.t < T) {
    torch::Tensor m_prev;
    {
      torch::NoGradGuard no_grad;
      ConditionBundle roll = cond.detached();
      NetDenoiser denoiser(net);
      const std::vector<int> ts = uniform_timesteps(T, res.t, opts.rollout_steps);
      torch::Tensor m = rng.normal_tensor({B, 2, L, L});
      torch::Tensor x0;
      for (std::size_t j = 0; j + 1 < ts.size(); ++j) {
        x0 = denoiser.predict(m, ts[j], roll);
        torch::Tensor z;
        if (sched.sigma(ts[j], ts[j + 1]) > 0.0) z = rng.normal_tensor({B, 2, L, L});
        m = ddim_step(m, x0, ts[j], ts[j + 1], sched, z);
        roll.r = refine_condition(x0, roll.f_d, opts.condition_clamp);
      }
      m_prev = roll.r.m_prev;
    }
    // f_{0|t} keeps its gradient path into the image encoder.
    cond.r = {m_prev, warp_feature_grid(cond.f_d, m_prev), true};
    res.refined = true;
  }

  const torch::Tensor z = rng.normal_tensor({B, 2, L, L});
  const torch::Tensor m_t = forward_diffuse(batch.m0, res.t, z, sched);
  const torch::Tensor x0_hat = net->forward(m_t, torch::full({B}, res.t, torch::kInt64), cond);
  const torch::Tensor loss = diffusion_loss(batch.m0, x0_hat);
  res.loss = loss.item<double>();
  if (!std::isfinite(res.loss)) {
    std::ostringstream os;
    os << "non-finite loss " << res.loss << " at t=" << res.t
       << " (max |m0| = " << batch.m0.abs().max().item<double>()
       << ", max |x0_hat| = " << x0_hat.abs().max().item<double>() << ")";
    throw TrainingError(os.str());
  }
  opt.zero_grad();
  loss.backward();
  torch::nn::utils::clip_grad_norm_(net->parameters(), opts.grad_clip);
  opt.step();
  return res;
}

TrainBatch TrainingSet::batch(const std::vector<int64_t>& indices) const {
  const torch::Tensor idx = torch::tensor(indices, torch::kInt64);
  return {images.index_select(0, idx), fg_masks.index_select(0, idx),
          textline_masks.index_select(0, idx), m0.index_select(0, idx)};
}

TrainingSet make_training_set(const std::vector<SampleRecord>& records, int input_size) {
  if (records.empty()) throw InvalidArgument("make_training_set: no records");
  std::vector<const DocumentImage*> im, fg, tl;
  std::vector<torch::Tensor> maps;
  for (const auto& r : records) {
    im.push_back(&r.warped);
    fg.push_back(&r.fg_mask);
    tl.push_back(&r.textline_mask);
    if (!maps.empty() && (r.gt_map_latent.height() != records[0].gt_map_latent.height() ||
                          r.gt_map_latent.width() != records[0].gt_map_latent.width())) {
      throw InvalidArgument("make_training_set: latent sizes differ (" + r.id + ")");
    }
    maps.push_back(mapping_to_tensor(r.gt_map_latent));
  }
  const NetInputs in = make_net_inputs(im, fg, tl, input_size);
  return {in.images, in.fg_masks, in.textline_masks, torch::stack(maps)};
}

Trainer::Trainer(const NetConfig& net_cfg, const NoiseSchedule& sched, const TrainerOptions& opts,
                 std::uint64_t seed)
    : sched_(sched), opts_(opts), rng_(derive_seed(seed, 0)) {
  if (opts.batch_size < 1) throw InvalidArgument("Trainer: batch_size must be >= 1");
  if (!(opts.lr > 0.0)) throw InvalidArgument("Trainer: lr must be positive");
  torch::manual_seed(seed);
  net_ = DvdNet(net_cfg);
  opt_ = std::make_unique<torch::optim::Adam>(net_->parameters(), torch::optim::AdamOptions(opts.lr));
}

StepResult Trainer::step(const TrainingSet& data) {
  if (data.size() == 0) throw InvalidArgument("Trainer::step: empty training set");
  std::vector<int64_t> idx(opts_.batch_size);
  for (auto& i : idx) i = rng_.uniform_int(0, static_cast<int>(data.size() - 1));
  net_->train();
  StepResult r = tvcr_train_step(net_, *opt_, data.batch(idx), sched_, opts_.step, rng_);
  ++updates_;
  return r;
}

torch::Tensor predict_mappings(DvdNet& net, const NetInputs& inputs, const NoiseSchedule& sched,
                               const SamplerOptions& opts, bool dual, Rng& rng) {
  torch::NoGradGuard no_grad;
  net->eval();
  const ConditionBundle cond = net->encode(inputs.images, inputs.fg_masks, inputs.textline_masks);
  NetDenoiser denoiser(net);
  return dual ? dual_hypothesis_sample(denoiser, cond, sched, opts, rng)
              : sample(denoiser, cond, sched, opts, rng);
}

}  // namespace dvd
