#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dvd/image.hpp"

namespace dvd {

// ---- MS-SSIM ---------------------------------------------------------------

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Scales used for an image whose smaller side is `min_side`: 5 from 176 px,
/// otherwise as many as keep the coarsest side >= 11 (the Gaussian window).
int ms_ssim_scales(int min_side);

/// Multi-scale SSIM on luma, 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1. Per-scale terms are clamped at 0 so the
/// result lies in [0, 1]; weights are renormalised when fewer than five
/// scales fit.
double ms_ssim(const DocumentImage& a, const DocumentImage& b);

// ---- dense flow, LD, AD ----------------------------------------------------

/// Per-pixel displacement (dx, dy) in pixels: from(p) ~ to(p + flow(p)).
struct FlowField {
  int height = 0, width = 0;
  std::vector<float> uv;  // interleaved dx, dy
  float dx(int r, int c) const { return uv[2 * (static_cast<std::size_t>(r) * width + c)]; }
  float dy(int r, int c) const { return uv[2 * (static_cast<std::size_t>(r) * width + c) + 1]; }
};

class FlowBackend {
 public:
  virtual ~FlowBackend() = default;
  virtual FlowField compute(const DocumentImage& from, const DocumentImage& to) const = 0;
  virtual std::string id() const = 0;
};

/// Names: "dis" (default; coarse-to-fine DIS with variational refinement)
/// and "farneback". Throws InvalidArgument for anything else.
std::unique_ptr<FlowBackend> make_flow_backend(std::string_view name);

struct DistortionOptions {
  int max_side = 512;  // <= 0 evaluates at full resolution
};

/// Mean flow magnitude (pixels) from `dewarped` to `gt`.
double local_distortion(const DocumentImage& dewarped, const DocumentImage& gt,
                        const FlowBackend& flow, const DistortionOptions& opts = {});

/// Flow with the least-squares similarity (isotropic scale + translation)
/// removed, then the residual magnitude averaged with weights proportional
/// to the GT gradient magnitude. Pixels whose target lands outside the
/// frame are excluded.
double aligned_distortion(const DocumentImage& dewarped, const DocumentImage& gt,
                          const FlowBackend& flow, const DistortionOptions& opts = {});

struct Distortion {
  double ld = 0.0, ad = 0.0;
};
/// LD and AD from a single flow computation.
Distortion distortion_metrics(const DocumentImage& dewarped, const DocumentImage& gt,
                              const FlowBackend& flow, const DistortionOptions& opts = {});

// ---- text metrics ----------------------------------------------------------

/// Unit-cost Levenshtein distance over Unicode code points (UTF-8 input).
std::size_t edit_distance(std::string_view hyp, std::string_view ref);

/// edit_distance / code points in `ref`. Throws InvalidArgument for an empty ref.
double char_error_rate(std::string_view hyp, std::string_view ref);

std::u32string decode_utf8(std::string_view s);

}  // namespace dvd
