#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "dvd/denoiser.hpp"
#include "dvd/rng.hpp"
#include "dvd/schedule.hpp"
#include "dvd/synth.hpp"

namespace dvd {

/// Anything that maps (m_t, t, c_t) to an estimate of the clean mapping m_0.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual torch::Tensor predict(const torch::Tensor& m_t, int t, const ConditionBundle& cond) = 0;
};

class NetDenoiser final : public Denoiser {
 public:
  explicit NetDenoiser(DvdNet net, StreamMask streams = kAllStreams)
      : net_(std::move(net)), streams_(streams) {}
  torch::Tensor predict(const torch::Tensor& m_t, int t, const ConditionBundle& cond) override;

 private:
  DvdNet net_;
  StreamMask streams_;
};

class FunctionDenoiser final : public Denoiser {
 public:
  using Fn = std::function<torch::Tensor(const torch::Tensor&, int, const ConditionBundle&)>;
  explicit FunctionDenoiser(Fn fn) : fn_(std::move(fn)) {}
  torch::Tensor predict(const torch::Tensor& m_t, int t, const ConditionBundle& cond) override {
    return fn_(m_t, t, cond);
  }

 private:
  Fn fn_;
};

struct SamplerOptions {
  int steps = 3;
  bool tvcr = true;            // false keeps r_t at zeros for every step
  double condition_clamp = 1.5;
};

/// Builds the time-variant condition from a clean-mapping estimate: the
/// clamped estimate and f_d backward-mapped with it.
TimeVariantCondition refine_condition(const torch::Tensor& x0_hat, const torch::Tensor& f_d, double clamp);

/// Reverse process from m_T ~ N(0, I) over `steps` uniformly spaced
/// timesteps; returns the last clean-mapping estimate [B, 2, h, w].
torch::Tensor sample(Denoiser& denoiser, const ConditionBundle& fixed, const NoiseSchedule& sched,
                     const SamplerOptions& opts, Rng& rng);

/// Mean of two independent reverse passes.
torch::Tensor dual_hypothesis_sample(Denoiser& denoiser, const ConditionBundle& fixed,
                                     const NoiseSchedule& sched, const SamplerOptions& opts,
                                     Rng& first, Rng& second);
torch::Tensor dual_hypothesis_sample(Denoiser& denoiser, const ConditionBundle& fixed,
                                     const NoiseSchedule& sched, const SamplerOptions& opts, Rng& rng);

/// Mean squared error between the clean mapping and its estimate.
torch::Tensor diffusion_loss(const torch::Tensor& m0, const torch::Tensor& x0_hat);

struct TrainBatch {
  torch::Tensor images, fg_masks, textline_masks;  // network inputs
  torch::Tensor m0;                                // [B, 2, h, w]
};

struct TrainOptions {
  int rollout_steps = 3;  // timesteps in the T -> t rollout, t included
  bool tvcr = true;
  double condition_clamp = 1.5;
  double grad_clip = 1.0;
};

struct StepResult {
  double loss = 0.0;
  int t = 0;
  bool refined = false;  // r_t came from a rollout rather than zeros
};

/// One update: t ~ U{1..T}; r_t from a no-grad rollout (zeros at t = T);
/// m_t by forward diffusion; loss on the network's m_0 estimate; clipped
/// optimizer step. Throws TrainingError on a non-finite loss.
StepResult tvcr_train_step(DvdNet& net, torch::optim::Optimizer& opt, const TrainBatch& batch,
                           const NoiseSchedule& sched, const TrainOptions& opts, Rng& rng);

/// Tensors for a whole training set, ready for batching.
struct TrainingSet {
  torch::Tensor images, fg_masks, textline_masks, m0;
  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  TrainBatch batch(const std::vector<int64_t>& indices) const;
};

/// Network inputs at `input_size` and latent ground-truth mappings.
TrainingSet make_training_set(const std::vector<SampleRecord>& records, int input_size);

struct TrainerOptions {
  int batch_size = 8;
  double lr = 1e-4;
  TrainOptions step;
};

/// Owns parameters, optimizer and RNG for a training run.
class Trainer {
 public:
  Trainer(const NetConfig& net_cfg, const NoiseSchedule& sched, const TrainerOptions& opts,
          std::uint64_t seed);

  StepResult step(const TrainingSet& data);

  DvdNet& net() { return net_; }
  torch::optim::Adam& optimizer() { return *opt_; }
  Rng& rng() { return rng_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const TrainerOptions& options() const { return opts_; }
  int64_t updates() const { return updates_; }
  void set_updates(int64_t n) { updates_ = n; }

 private:
  NoiseSchedule sched_;
  TrainerOptions opts_;
  DvdNet net_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_;
  Rng rng_;
  int64_t updates_ = 0;
};

/// Encodes, samples (single or dual hypothesis) and returns [B, 2, h, w].
torch::Tensor predict_mappings(DvdNet& net, const NetInputs& inputs, const NoiseSchedule& sched,
                               const SamplerOptions& opts, bool dual, Rng& rng);

}  // namespace dvd
