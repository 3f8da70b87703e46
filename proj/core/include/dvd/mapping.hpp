#pragma once

#include <cstddef>
#include <vector>

#include "dvd/image.hpp"

namespace dvd {

/// Dense backward mapping. Cell (u, v) stores the normalized (x, y) source
/// coordinate to sample from, with (-1, -1) the top-left pixel centre of the
/// source image and (+1, +1) the bottom-right one.
class GridMapping {
 public:
  GridMapping() = default;
  GridMapping(int height, int width);
  GridMapping(int height, int width, std::vector<float> coords);

  static GridMapping identity(int height, int width);
  static GridMapping constant(int height, int width, float x, float y);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  bool empty() const noexcept { return coords_.empty(); }

  float& x(int u, int v) { return coords_[index(u, v)]; }
  float& y(int u, int v) { return coords_[index(u, v) + 1]; }
  float x(int u, int v) const { return coords_[index(u, v)]; }
  float y(int u, int v) const { return coords_[index(u, v) + 1]; }

  std::vector<float>& coords() noexcept { return coords_; }
  const std::vector<float>& coords() const noexcept { return coords_; }

  bool same_shape(const GridMapping& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// True when every coordinate lies in [-1 - slack, 1 + slack].
  bool in_frame(float slack = 0.0f) const noexcept;

 private:
  std::size_t index(int u, int v) const noexcept {
    return (static_cast<std::size_t>(u) * width_ + v) * 2;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> coords_;
};

/// Normalized coordinate of pixel index i along an axis of length n.
inline double pixel_to_norm(double i, int n) {
  return n > 1 ? 2.0 * i / (n - 1) - 1.0 : 0.0;
}
inline double norm_to_pixel(double c, int n) {
  return n > 1 ? (c + 1.0) * 0.5 * (n - 1) : 0.0;
}

/// output[u, v] = bilinear sample of src at map[u, v]; lookups outside
/// [-1, 1] produce `fill` in every channel.
DocumentImage apply_backward_mapping(const DocumentImage& src,
                                     const GridMapping& map, float fill = 0.0f);

/// Corner-aligned bilinear upsampling; output corners equal input corners.
GridMapping upsample_mapping(const GridMapping& map, int out_h, int out_w);

/// Corner-aligned bilinear resampling to a grid no larger than the input.
GridMapping downsample_mapping(const GridMapping& map, int out_h, int out_w);

/// result[u, v] = outer sampled bilinearly at inner[u, v]. Lookups past the
/// frame extrapolate outer's displacement from the nearest edge cell.
GridMapping compose_mappings(const GridMapping& outer, const GridMapping& inner);

struct InversionOptions {
  int max_iters = 50;
  double tol = 1e-4;
  double damping = 1.0;
};

/// Inverts a smooth bijective mapping by fixed-point iteration on the
/// displacement: inv <- identity - disp(fwd at inv). Throws ConvergenceError
/// carrying the final residual when `tol` is not reached.
GridMapping invert_mapping(const GridMapping& fwd, const InversionOptions& opts = {});

/// max over non-border cells of |compose(fwd, inv) - identity|.
double inversion_residual(const GridMapping& fwd, const GridMapping& inv);

/// Largest absolute coordinate difference between two equally sized mappings.
double max_abs_difference(const GridMapping& a, const GridMapping& b);

/// Minimum finite-difference Jacobian determinant in pixel units
/// (identity gives 1).
double min_jacobian_determinant(const GridMapping& map);

}  // namespace dvd
