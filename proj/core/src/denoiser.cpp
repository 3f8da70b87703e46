#include "dvd/denoiser.hpp"

#include <cmath>
#include <string>

#include <nlohmann/json.hpp>

#include "dvd/errors.hpp"

namespace dvd {

namespace F = torch::nn::functional;

NetConfig NetConfig::toy() {
  NetConfig c;
  c.latent_size = 32;
  c.dim = 64;
  c.n_ceb = 4;
  c.n_fgb = 2;
  c.n_heads = 4;
  c.time_dim = 64;
  c.input_size = 128;
  c.patch = 4;
  return c;
}

void NetConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("NetConfig: " + m); };
  if (latent_size < 2) fail("latent_size must be >= 2");
  if (dim < 4 || dim % 4 != 0) fail("dim must be a positive multiple of 4");
  if (n_heads < 1 || dim % n_heads != 0) fail("dim must be divisible by n_heads");
  if (n_ceb < 1) fail("n_ceb must be >= 1");
  if (n_fgb < 0) fail("n_fgb must be >= 0");
  if (time_dim < 2 || time_dim % 2 != 0) fail("time_dim must be even and >= 2");
  if (patch < 1 || latent_size % patch != 0) fail("latent_size must be divisible by patch");
  if (input_size < latent_size) fail("input_size must be >= latent_size");
}

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = nlohmann::json{{"latent_size", c.latent_size}, {"dim", c.dim},       {"n_ceb", c.n_ceb},
                     {"n_fgb", c.n_fgb},             {"n_heads", c.n_heads}, {"time_dim", c.time_dim},
                     {"input_size", c.input_size},   {"patch", c.patch}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  const NetConfig d;
  c.latent_size = j.value("latent_size", d.latent_size);
  c.dim = j.value("dim", d.dim);
  c.n_ceb = j.value("n_ceb", d.n_ceb);
  c.n_fgb = j.value("n_fgb", d.n_fgb);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.time_dim = j.value("time_dim", d.time_dim);
  c.input_size = j.value("input_size", d.input_size);
  c.patch = j.value("patch", d.patch);
}

TimeVariantCondition TimeVariantCondition::zeros(int64_t batch, int dim, int latent_size) {
  return {torch::zeros({batch, 2, latent_size, latent_size}),
          torch::zeros({batch, dim, latent_size, latent_size}), false};
}

ConditionBundle ConditionBundle::detached() const {
  return {f_d.detach(), f_m.detach(), f_l.detach(),
          {r.m_prev.detach(), r.f_dewarped.detach(), r.valid}};
}

// ---------------------------------------------------------------------------

FeatureEncoderImpl::FeatureEncoderImpl(int in_channels, int dim, int input_size, int latent_size)
    : latent_size_(latent_size) {
  const int c1 = std::max(2, dim / 4), c2 = std::max(2, dim / 2);
  auto conv = [](int in, int out, int k, int stride) {
    auto o = torch::nn::Conv2dOptions(in, out, k).stride(stride);
    if (k > 1) o.padding(k / 2).padding_mode(torch::kReplicate);
    return torch::nn::Conv2d(o);
  };
  body_ = torch::nn::Sequential();
  int size = input_size, ch = in_channels;
  while (size / 2 >= latent_size) {
    const int out = ch == in_channels ? c1 : c2;
    body_->push_back(conv(ch, out, 3, 2));
    body_->push_back(torch::nn::SiLU());
    ch = out;
    size = (size + 1) / 2;
  }
  body_->push_back(conv(ch, c2, 3, 1));
  body_->push_back(torch::nn::SiLU());
  body_->push_back(conv(c2, dim, 1, 1));
  register_module("body", body_);
}

torch::Tensor FeatureEncoderImpl::forward(const torch::Tensor& x) {
  torch::Tensor y = body_->forward(x);
  if (y.size(2) != latent_size_ || y.size(3) != latent_size_) {
    y = F::adaptive_avg_pool2d(y, F::AdaptiveAvgPool2dFuncOptions({latent_size_, latent_size_}));
  }
  return y;
}

AttentionImpl::AttentionImpl(int dim, int heads) : heads_(heads) {
  q_ = register_module("q", torch::nn::Linear(dim, dim));
  k_ = register_module("k", torch::nn::Linear(dim, dim));
  v_ = register_module("v", torch::nn::Linear(dim, dim));
  out_ = register_module("out", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& context) {
  const auto B = x.size(0), N = x.size(1), M = context.size(1), D = x.size(2);
  const auto dh = D / heads_;
  auto split = [&](const torch::Tensor& t, int64_t len) {
    return t.view({B, len, heads_, dh}).transpose(1, 2);
  };
  const torch::Tensor q = split(q_(x), N), k = split(k_(context), M), v = split(v_(context), M);
  const torch::Tensor w = torch::softmax(q.matmul(k.transpose(-2, -1)) / std::sqrt(double(dh)), -1);
  return out_(w.matmul(v).transpose(1, 2).reshape({B, N, D}));
}

torch::nn::Sequential make_mlp(int dim, int ratio) {
  return torch::nn::Sequential(torch::nn::Linear(dim, dim * ratio), torch::nn::GELU(),
                               torch::nn::Linear(dim * ratio, dim));
}

namespace {

torch::nn::LayerNorm plain_norm(int dim) {
  return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).elementwise_affine(false).eps(1e-6));
}

torch::Tensor modulate(const torch::Tensor& x, const torch::Tensor& shift, const torch::Tensor& scale) {
  return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1);
}

// Fixed 2D sin-cos embedding, [g*g, dim]; first half encodes rows, second columns.
torch::Tensor sincos_2d(int g, int dim) {
  const int quarter = dim / 4;
  torch::Tensor omega = torch::arange(quarter, torch::kFloat64) / std::max(quarter, 1);
  omega = 1.0 / torch::pow(10000.0, omega);
  torch::Tensor pos = torch::arange(g, torch::kFloat64);
  torch::Tensor ang = pos.unsqueeze(1) * omega.unsqueeze(0);  // [g, quarter]
  torch::Tensor e1 = torch::cat({torch::sin(ang), torch::cos(ang)}, 1);  // [g, dim/2]
  torch::Tensor rows = e1.unsqueeze(1).expand({g, g, dim / 2});
  torch::Tensor cols = e1.unsqueeze(0).expand({g, g, dim / 2});
  return torch::cat({rows, cols}, 2).reshape({g * g, dim}).to(torch::kFloat32);
}

}  // namespace

ConditionEmbeddingBlockImpl::ConditionEmbeddingBlockImpl(int dim, int heads) : dim_(dim) {
  norm1_ = register_module("norm1", plain_norm(dim));
  norm2_ = register_module("norm2", plain_norm(dim));
  modulation_ = register_module("modulation", torch::nn::Linear(dim, 6 * dim));
  for (int s = 0; s < 4; ++s) {
    cross_.push_back(register_module("cross" + std::to_string(s), Attention(dim, heads)));
    context_norms_.push_back(register_module(
        "context_norm" + std::to_string(s), torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}))));
  }
  fuse_ = register_module("fuse", torch::nn::Linear(4 * dim, dim));
  mlp_ = register_module("mlp", make_mlp(dim, 4));
}

torch::Tensor ConditionEmbeddingBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb,
                                                   const std::array<torch::Tensor, 4>& streams,
                                                   const StreamMask& enabled) {
  const auto mod = modulation_(torch::silu(temb)).chunk(6, 1);
  const torch::Tensor h = modulate(norm1_(x), mod[0], mod[1]);
  std::vector<torch::Tensor> outs;
  outs.reserve(4);
  for (int s = 0; s < 4; ++s) {
    torch::Tensor a = cross_[s](h, context_norms_[s](streams[s]));
    outs.push_back(enabled[s] ? a : torch::zeros_like(a));
  }
  torch::Tensor y = x + mod[2].unsqueeze(1) * fuse_(torch::cat(outs, 2));
  return y + mod[5].unsqueeze(1) * mlp_->forward(modulate(norm2_(y), mod[3], mod[4]));
}

FusionBlockImpl::FusionBlockImpl(int dim, int heads) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn_ = register_module("attn", Attention(dim, heads));
  mlp_ = register_module("mlp", make_mlp(dim, 4));
}

torch::Tensor FusionBlockImpl::forward(const torch::Tensor& x) {
  const torch::Tensor h = norm1_(x);
  const torch::Tensor y = x + attn_(h, h);
  return y + mlp_->forward(norm2_(y));
}

DvdNetImpl::DvdNetImpl(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int D = cfg_.dim, p2 = cfg_.patch * cfg_.patch;
  enc_image_ = register_module("enc_image", FeatureEncoder(3, D, cfg_.input_size, cfg_.latent_size));
  enc_mask_ = register_module("enc_mask", FeatureEncoder(1, D, cfg_.input_size, cfg_.latent_size));
  enc_textline_ =
      register_module("enc_textline", FeatureEncoder(1, D, cfg_.input_size, cfg_.latent_size));
  embed_latent_ = register_module("embed_latent", torch::nn::Linear(2 * p2, D));
  const std::array<int, 4> stream_channels{D, D, D, D + 2};
  for (int s = 0; s < 4; ++s) {
    embed_stream_[s] = register_module("embed_stream" + std::to_string(s),
                                       torch::nn::Linear(stream_channels[s] * p2, D));
  }
  time_mlp_ = register_module(
      "time_mlp", torch::nn::Sequential(torch::nn::Linear(cfg_.time_dim, D), torch::nn::SiLU(),
                                        torch::nn::Linear(D, D)));
  for (int i = 0; i < cfg_.n_ceb; ++i) {
    cebs_.push_back(register_module("ceb" + std::to_string(i), ConditionEmbeddingBlock(D, cfg_.n_heads)));
  }
  for (int i = 0; i < cfg_.n_fgb; ++i) {
    fgbs_.push_back(register_module("fgb" + std::to_string(i), FusionBlock(D, cfg_.n_heads)));
  }
  head_norm_ = register_module("head_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({D})));
  // Three linear layers: dim -> dim -> dim/2 -> 2 * patch^2.
  head_ = register_module(
      "head", torch::nn::Sequential(torch::nn::Linear(D, D), torch::nn::SiLU(),
                                    torch::nn::Linear(D, D / 2), torch::nn::SiLU(),
                                    torch::nn::Linear(D / 2, 2 * p2)));
  {
    torch::NoGradGuard ng;
    auto last = head_->ptr<torch::nn::LinearImpl>(4);
    last->weight.mul_(0.1);
    last->bias.zero_();
  }
  pos_embed_ = register_buffer("pos_embed", sincos_2d(cfg_.grid(), D));
  identity_grid_ = register_buffer("identity_grid", identity_grid(cfg_.latent_size, cfg_.latent_size));
}

ConditionBundle DvdNetImpl::encode(const torch::Tensor& images, const torch::Tensor& fg_masks,
                                   const torch::Tensor& textline_masks) {
  const int S = cfg_.input_size;
  auto check = [S](const torch::Tensor& t, int64_t c, const char* what) {
    if (t.dim() != 4 || t.size(1) != c || t.size(2) != S || t.size(3) != S) {
      throw InvalidArgument(std::string("DvdNet::encode: ") + what + " must be [B, " +
                            std::to_string(c) + ", " + std::to_string(S) + ", " + std::to_string(S) + "]");
    }
  };
  check(images, 3, "images");
  check(fg_masks, 1, "fg_masks");
  check(textline_masks, 1, "textline_masks");
  ConditionBundle c;
  c.f_d = enc_image_(images);
  c.f_m = enc_mask_(fg_masks);
  c.f_l = enc_textline_(textline_masks);
  c.r = TimeVariantCondition::zeros(images.size(0), cfg_.dim, cfg_.latent_size);
  return c;
}

torch::Tensor DvdNetImpl::tokens(const torch::Tensor& grid, torch::nn::Linear& embed) {
  // [B, C, h, w] -> [B, N, C * p * p] -> [B, N, D]
  const auto B = grid.size(0), C = grid.size(1);
  const int p = cfg_.patch, g = cfg_.grid();
  torch::Tensor t = grid.reshape({B, C, g, p, g, p}).permute({0, 2, 4, 1, 3, 5}).reshape({B, g * g, C * p * p});
  return embed(t) + pos_embed_;
}

torch::Tensor DvdNetImpl::time_embedding(const torch::Tensor& t) {
  const int half = cfg_.time_dim / 2;
  const auto dtype = pos_embed_.scalar_type();
  torch::Tensor freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat64) / half).to(dtype);
  torch::Tensor args = t.to(dtype).unsqueeze(1) * freqs.unsqueeze(0);
  return time_mlp_->forward(torch::cat({torch::cos(args), torch::sin(args)}, 1));
}

torch::Tensor DvdNetImpl::forward(const torch::Tensor& m_t, const torch::Tensor& t,
                                  const ConditionBundle& cond, const StreamMask& streams) {
  const int L = cfg_.latent_size;
  const auto B = m_t.size(0);
  auto check = [&](const torch::Tensor& x, int64_t c, const char* what) {
    if (!x.defined() || x.dim() != 4 || x.size(0) != B || x.size(1) != c || x.size(2) != L ||
        x.size(3) != L) {
      throw InvalidArgument(std::string("DvdNet::forward: ") + what + " has the wrong shape");
    }
  };
  check(m_t, 2, "m_t");
  check(cond.f_d, cfg_.dim, "f_d");
  check(cond.f_m, cfg_.dim, "f_m");
  check(cond.f_l, cfg_.dim, "f_l");
  if (t.dim() != 1 || t.size(0) != B) throw InvalidArgument("DvdNet::forward: t must be [B]");

  torch::Tensor refine;
  if (cond.r.valid) {
    check(cond.r.m_prev, 2, "r.m_prev");
    check(cond.r.f_dewarped, cfg_.dim, "r.f_dewarped");
    refine = torch::cat({cond.r.m_prev, cond.r.f_dewarped}, 1);
  } else {
    refine = torch::zeros({B, cfg_.dim + 2, L, L}, m_t.options());
  }

  const std::array<torch::Tensor, 4> ctx{tokens(cond.f_d, embed_stream_[0]),
                                         tokens(cond.f_m, embed_stream_[1]),
                                         tokens(cond.f_l, embed_stream_[2]),
                                         tokens(refine, embed_stream_[3])};
  const torch::Tensor temb = time_embedding(t);
  torch::Tensor x = tokens(m_t, embed_latent_);
  for (auto& b : cebs_) x = b(x, temb, ctx, streams);
  for (auto& b : fgbs_) x = b(x);
  x = head_->forward(head_norm_(x));  // [B, N, 2 p^2]

  const int p = cfg_.patch, g = cfg_.grid();
  x = x.reshape({B, g, g, 2, p, p}).permute({0, 3, 1, 4, 2, 5}).reshape({B, 2, L, L});
  return x + identity_grid_;
}

int64_t count_parameters(const NetConfig& cfg) {
  DvdNet net(cfg);
  int64_t n = 0;
  for (const auto& p : net->parameters()) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------

torch::Tensor image_to_tensor(const DocumentImage& img) {
  if (img.empty()) throw InvalidArgument("image_to_tensor: empty image");
  torch::Tensor t = torch::from_blob(const_cast<float*>(img.pixels().data()),
                                     {img.height(), img.width(), img.channels()}, torch::kFloat32);
  // clone, not contiguous: a 1-channel permute is already contiguous and
  // would still alias the image buffer.
  return t.permute({2, 0, 1}).clone(torch::MemoryFormat::Contiguous);
}

torch::Tensor mapping_to_tensor(const GridMapping& map) {
  if (map.empty()) throw InvalidArgument("mapping_to_tensor: empty mapping");
  torch::Tensor t = torch::from_blob(const_cast<float*>(map.coords().data()),
                                     {map.height(), map.width(), 2}, torch::kFloat32);
  return t.permute({2, 0, 1}).clone(torch::MemoryFormat::Contiguous);
}

GridMapping tensor_to_mapping(const torch::Tensor& t) {
  if (t.dim() != 3 || t.size(0) != 2) throw InvalidArgument("tensor_to_mapping: expected [2, h, w]");
  torch::Tensor hwc = t.detach().to(torch::kFloat32).permute({1, 2, 0}).contiguous();
  const float* p = hwc.data_ptr<float>();
  return GridMapping(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)),
                     std::vector<float>(p, p + hwc.numel()));
}

torch::Tensor identity_grid(int height, int width) {
  return mapping_to_tensor(GridMapping::identity(height, width)).unsqueeze(0);
}

torch::Tensor warp_feature_grid(const torch::Tensor& features, const torch::Tensor& mapping) {
  if (features.dim() != 4 || mapping.dim() != 4 || mapping.size(1) != 2 ||
      mapping.size(0) != features.size(0)) {
    throw InvalidArgument("warp_feature_grid: expected [B, C, H, W] features and [B, 2, h, w] mapping");
  }
  return F::grid_sample(features, mapping.permute({0, 2, 3, 1}),
                        F::GridSampleFuncOptions()
                            .mode(torch::kBilinear)
                            .padding_mode(torch::kZeros)
                            .align_corners(true));
}

NetInputs make_net_inputs(const std::vector<const DocumentImage*>& images,
                          const std::vector<const DocumentImage*>& fg_masks,
                          const std::vector<const DocumentImage*>& textline_masks, int input_size) {
  if (images.empty() || images.size() != fg_masks.size() || images.size() != textline_masks.size()) {
    throw InvalidArgument("make_net_inputs: batch lists must be non-empty and equally long");
  }
  auto stack = [input_size](const std::vector<const DocumentImage*>& xs, int channels) {
    std::vector<torch::Tensor> ts;
    ts.reserve(xs.size());
    for (const DocumentImage* x : xs) {
      if (x->channels() != channels) {
        throw InvalidArgument("make_net_inputs: expected " + std::to_string(channels) + " channels");
      }
      ts.push_back(image_to_tensor(resize_bilinear(*x, input_size, input_size)));
    }
    return torch::stack(ts);
  };
  return {stack(images, 3), stack(fg_masks, 1), stack(textline_masks, 1)};
}

ConditionBundle extract_features(DvdNet& net, const DocumentImage& warped, const DocumentImage& fg_mask,
                                 const DocumentImage& textline_mask) {
  const NetInputs in = make_net_inputs({&warped}, {&fg_mask}, {&textline_mask}, net->config().input_size);
  return net->encode(in.images, in.fg_masks, in.textline_masks);
}

}  // namespace dvd
