#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "dvd/image.hpp"
#include "dvd/mapping.hpp"

namespace dvd {

/// Network hyper-parameters. `patch` groups patch x patch latent cells into
/// one token; patch = 1 gives one token per grid cell.
struct NetConfig {
  int latent_size = 64;
  int dim = 256;
  int n_ceb = 12;
  int n_fgb = 6;
  int n_heads = 8;
  int time_dim = 256;
  int input_size = 256;
  int patch = 1;

  /// Desk-scale preset: 4 CEBs, 2 FGBs, 32x32 latent, 128px input.
  static NetConfig toy();

  int grid() const { return latent_size / patch; }
  int tokens() const { return grid() * grid(); }
  /// Throws InvalidArgument on inconsistent settings.
  void validate() const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

/// m_{0|t} and f_{0|t}. When `valid` is false both are all-zero grids.
struct TimeVariantCondition {
  torch::Tensor m_prev;      // [B, 2, h, w]
  torch::Tensor f_dewarped;  // [B, dim, h, w]
  bool valid = false;

  static TimeVariantCondition zeros(int64_t batch, int dim, int latent_size);
};

/// Compound condition {f_d, f_m, f_l, r_t}; feature grids are [B, dim, h, w].
struct ConditionBundle {
  torch::Tensor f_d, f_m, f_l;
  TimeVariantCondition r;

  int64_t batch() const { return f_d.size(0); }
  ConditionBundle detached() const;
};

enum Stream : int { kStreamImage = 0, kStreamMask = 1, kStreamTextline = 2, kStreamRefine = 3 };
using StreamMask = std::array<bool, 4>;
inline constexpr StreamMask kAllStreams{true, true, true, true};

/// Small convolutional encoder: stride-2 stages from input_size down to
/// latent_size, a 3x3 stage at latent resolution, then 1x1 to `dim`.
/// Replicate padding keeps constant inputs constant.
class FeatureEncoderImpl : public torch::nn::Module {
 public:
  FeatureEncoderImpl(int in_channels, int dim, int input_size, int latent_size);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
  int latent_size_;
};
TORCH_MODULE(FeatureEncoder);

class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int dim, int heads);
  /// x: [B, N, D] queries; context: [B, M, D].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context);

 private:
  int heads_;
  torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, out_{nullptr};
};
TORCH_MODULE(Attention);

torch::nn::Sequential make_mlp(int dim, int ratio);

/// Condition embedding block: time-modulated pre-norm, four parallel
/// cross-attentions (one per condition stream) whose outputs are
/// concatenated and projected, then a modulated MLP.
class ConditionEmbeddingBlockImpl : public torch::nn::Module {
 public:
  ConditionEmbeddingBlockImpl(int dim, int heads);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb,
                        const std::array<torch::Tensor, 4>& streams, const StreamMask& enabled);

 private:
  int dim_;
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  torch::nn::Linear modulation_{nullptr}, fuse_{nullptr};
  std::vector<Attention> cross_;
  std::vector<torch::nn::LayerNorm> context_norms_;
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(ConditionEmbeddingBlock);

/// Fusion generation block: pre-norm self-attention and feed-forward.
class FusionBlockImpl : public torch::nn::Module {
 public:
  FusionBlockImpl(int dim, int heads);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  Attention attn_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(FusionBlock);

/// The denoiser eps_theta(m_t, t, c_t); predicts the clean mapping m_0.
class DvdNetImpl : public torch::nn::Module {
 public:
  explicit DvdNetImpl(const NetConfig& cfg);

  const NetConfig& config() const { return cfg_; }

  /// images [B, 3, S, S], masks [B, 1, S, S] with S = input_size.
  ConditionBundle encode(const torch::Tensor& images, const torch::Tensor& fg_masks,
                         const torch::Tensor& textline_masks);

  /// m_t [B, 2, h, w], t [B] (int64) -> m0 estimate [B, 2, h, w].
  torch::Tensor forward(const torch::Tensor& m_t, const torch::Tensor& t,
                        const ConditionBundle& cond, const StreamMask& streams = kAllStreams);

 private:
  torch::Tensor tokens(const torch::Tensor& grid, torch::nn::Linear& embed);
  torch::Tensor time_embedding(const torch::Tensor& t);

  NetConfig cfg_;
  FeatureEncoder enc_image_{nullptr}, enc_mask_{nullptr}, enc_textline_{nullptr};
  torch::nn::Linear embed_latent_{nullptr};
  std::array<torch::nn::Linear, 4> embed_stream_{nullptr, nullptr, nullptr, nullptr};
  torch::nn::Sequential time_mlp_{nullptr};
  std::vector<ConditionEmbeddingBlock> cebs_;
  std::vector<FusionBlock> fgbs_;
  torch::nn::LayerNorm head_norm_{nullptr};
  torch::nn::Sequential head_{nullptr};
  torch::Tensor pos_embed_;      // [N, dim] buffer
  torch::Tensor identity_grid_;  // [1, 2, h, w] buffer
};
TORCH_MODULE(DvdNet);

/// Exact number of trainable parameters of a DvdNet built from `cfg`.
int64_t count_parameters(const NetConfig& cfg);

// Tensor conversions. Images become [C, H, W]; mappings [2, h, w] (x, y).
torch::Tensor image_to_tensor(const DocumentImage& img);
torch::Tensor mapping_to_tensor(const GridMapping& map);
GridMapping tensor_to_mapping(const torch::Tensor& t);

/// Identity mapping as a [1, 2, h, w] tensor.
torch::Tensor identity_grid(int height, int width);

/// Backward-maps a feature grid with a (possibly batched) mapping tensor;
/// bilinear, zero outside the frame, corner-aligned like apply_backward_mapping.
torch::Tensor warp_feature_grid(const torch::Tensor& features, const torch::Tensor& mapping);

struct NetInputs {
  torch::Tensor images, fg_masks, textline_masks;  // resized to input_size
};
NetInputs make_net_inputs(const std::vector<const DocumentImage*>& images,
                          const std::vector<const DocumentImage*>& fg_masks,
                          const std::vector<const DocumentImage*>& textline_masks,
                          int input_size);

/// Runs the three condition encoders; f_d, f_m, f_l at latent size.
ConditionBundle extract_features(DvdNet& net, const DocumentImage& warped,
                                 const DocumentImage& fg_mask, const DocumentImage& textline_mask);

}  // namespace dvd
