#include "dvd/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dvd {

namespace {

// Lookups this close to the frame edge count as inside; float storage of
// +-1 is not exact after arithmetic.
constexpr double kFrameSlack = 1e-5;
// Pixel positions this close to an integer snap to it, so identity-like
// maps reproduce their source exactly.
constexpr double kSnap = 1e-5;

double snap(double p) {
  const double r = std::round(p);
  return std::abs(p - r) < kSnap ? r : p;
}

struct Tap {
  int i0, i1;
  double w1;
};

Tap make_tap(double p, int n) {
  p = std::clamp(p, 0.0, static_cast<double>(n - 1));
  const int i0 = static_cast<int>(std::floor(p));
  const int i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, p - i0};
}

// Bilinear sample of the mapping's displacement (coords minus identity) at a
// fractional cell position, clamped to the grid.
void sample_displacement(const GridMapping& m, double pu, double pv, double& dx,
                         double& dy) {
  const Tap tu = make_tap(pu, m.height());
  const Tap tv = make_tap(pv, m.width());
  auto disp = [&](int u, int v, double& ox, double& oy) {
    ox = m.x(u, v) - pixel_to_norm(v, m.width());
    oy = m.y(u, v) - pixel_to_norm(u, m.height());
  };
  double x00, y00, x01, y01, x10, y10, x11, y11;
  disp(tu.i0, tv.i0, x00, y00);
  disp(tu.i0, tv.i1, x01, y01);
  disp(tu.i1, tv.i0, x10, y10);
  disp(tu.i1, tv.i1, x11, y11);
  const double a = tv.w1, b = tu.w1;
  dx = (1 - b) * ((1 - a) * x00 + a * x01) + b * ((1 - a) * x10 + a * x11);
  dy = (1 - b) * ((1 - a) * y00 + a * y01) + b * ((1 - a) * y10 + a * y11);
}

GridMapping resample(const GridMapping& map, int out_h, int out_w) {
  GridMapping out(out_h, out_w);
  const double su = out_h > 1 ? static_cast<double>(map.height() - 1) / (out_h - 1) : 0.0;
  const double sv = out_w > 1 ? static_cast<double>(map.width() - 1) / (out_w - 1) : 0.0;
  for (int u = 0; u < out_h; ++u) {
    const Tap tu = make_tap(u * su, map.height());
    for (int v = 0; v < out_w; ++v) {
      const Tap tv = make_tap(v * sv, map.width());
      const double a = tv.w1, b = tu.w1;
      auto lerp2 = [&](auto get) {
        return (1 - b) * ((1 - a) * get(tu.i0, tv.i0) + a * get(tu.i0, tv.i1)) +
               b * ((1 - a) * get(tu.i1, tv.i0) + a * get(tu.i1, tv.i1));
      };
      out.x(u, v) = static_cast<float>(lerp2([&](int i, int j) { return double(map.x(i, j)); }));
      out.y(u, v) = static_cast<float>(lerp2([&](int i, int j) { return double(map.y(i, j)); }));
    }
  }
  return out;
}

void require_nonempty(const GridMapping& m, const char* what) {
  if (m.empty()) throw InvalidArgument(std::string(what) + ": empty mapping");
}

}  // namespace

GridMapping::GridMapping(int height, int width)
    : height_(height), width_(width),
      coords_(static_cast<std::size_t>(height) * width * 2, 0.0f) {
  if (height <= 0 || width <= 0) {
    throw InvalidArgument("GridMapping: dimensions must be positive");
  }
}

GridMapping::GridMapping(int height, int width, std::vector<float> coords)
    : height_(height), width_(width), coords_(std::move(coords)) {
  if (height <= 0 || width <= 0) {
    throw InvalidArgument("GridMapping: dimensions must be positive");
  }
  if (coords_.size() != static_cast<std::size_t>(height) * width * 2) {
    throw InvalidArgument("GridMapping: coords size does not match height*width*2");
  }
}

GridMapping GridMapping::identity(int height, int width) {
  GridMapping m(height, width);
  for (int u = 0; u < height; ++u) {
    for (int v = 0; v < width; ++v) {
      m.x(u, v) = static_cast<float>(pixel_to_norm(v, width));
      m.y(u, v) = static_cast<float>(pixel_to_norm(u, height));
    }
  }
  return m;
}

GridMapping GridMapping::constant(int height, int width, float x, float y) {
  GridMapping m(height, width);
  for (std::size_t i = 0; i < m.coords_.size(); i += 2) {
    m.coords_[i] = x;
    m.coords_[i + 1] = y;
  }
  return m;
}

bool GridMapping::in_frame(float slack) const noexcept {
  const float lim = 1.0f + slack;
  return std::all_of(coords_.begin(), coords_.end(),
                     [lim](float c) { return c >= -lim && c <= lim; });
}

DocumentImage apply_backward_mapping(const DocumentImage& src, const GridMapping& map,
                                     float fill) {
  if (src.empty()) throw InvalidArgument("apply_backward_mapping: empty source image");
  require_nonempty(map, "apply_backward_mapping");
  const int H = src.height(), W = src.width(), C = src.channels();
  DocumentImage out(map.height(), map.width(), C);
  for (int u = 0; u < map.height(); ++u) {
    for (int v = 0; v < map.width(); ++v) {
      const double x = map.x(u, v), y = map.y(u, v);
      if (!(std::abs(x) <= 1.0 + kFrameSlack && std::abs(y) <= 1.0 + kFrameSlack)) {
        for (int c = 0; c < C; ++c) out.at(u, v, c) = fill;
        continue;
      }
      const Tap tx = make_tap(snap(norm_to_pixel(x, W)), W);
      const Tap ty = make_tap(snap(norm_to_pixel(y, H)), H);
      const double a = tx.w1, b = ty.w1;
      for (int c = 0; c < C; ++c) {
        const double top = (1 - a) * src.at(ty.i0, tx.i0, c) + a * src.at(ty.i0, tx.i1, c);
        const double bot = (1 - a) * src.at(ty.i1, tx.i0, c) + a * src.at(ty.i1, tx.i1, c);
        out.at(u, v, c) = static_cast<float>((1 - b) * top + b * bot);
      }
    }
  }
  return out;
}

GridMapping upsample_mapping(const GridMapping& map, int out_h, int out_w) {
  require_nonempty(map, "upsample_mapping");
  if (out_h < map.height() || out_w < map.width()) {
    throw InvalidArgument("upsample_mapping: target is smaller than the input; use downsample_mapping");
  }
  return resample(map, out_h, out_w);
}

GridMapping downsample_mapping(const GridMapping& map, int out_h, int out_w) {
  require_nonempty(map, "downsample_mapping");
  if (out_h <= 0 || out_w <= 0 || out_h > map.height() || out_w > map.width()) {
    throw InvalidArgument("downsample_mapping: target must be positive and no larger than the input");
  }
  return resample(map, out_h, out_w);
}

GridMapping compose_mappings(const GridMapping& outer, const GridMapping& inner) {
  require_nonempty(outer, "compose_mappings");
  require_nonempty(inner, "compose_mappings");
  GridMapping out(inner.height(), inner.width());
  for (int u = 0; u < inner.height(); ++u) {
    for (int v = 0; v < inner.width(); ++v) {
      const double x = inner.x(u, v), y = inner.y(u, v);
      double dx, dy;
      sample_displacement(outer, norm_to_pixel(y, outer.height()),
                          norm_to_pixel(x, outer.width()), dx, dy);
      out.x(u, v) = static_cast<float>(x + dx);
      out.y(u, v) = static_cast<float>(y + dy);
    }
  }
  return out;
}

double inversion_residual(const GridMapping& fwd, const GridMapping& inv) {
  const GridMapping rt = compose_mappings(fwd, inv);
  double worst = 0.0;
  for (int u = 1; u + 1 < rt.height(); ++u) {
    for (int v = 1; v + 1 < rt.width(); ++v) {
      worst = std::max({worst, std::abs(rt.x(u, v) - pixel_to_norm(v, rt.width())),
                        std::abs(rt.y(u, v) - pixel_to_norm(u, rt.height()))});
    }
  }
  return worst;
}

GridMapping invert_mapping(const GridMapping& fwd, const InversionOptions& opts) {
  require_nonempty(fwd, "invert_mapping");
  if (opts.max_iters < 0 || opts.tol <= 0.0 || opts.damping <= 0.0 || opts.damping > 1.0) {
    throw InvalidArgument("invert_mapping: invalid iteration options");
  }
  const int H = fwd.height(), W = fwd.width();
  std::vector<double> ix(static_cast<std::size_t>(H) * W), iy(ix.size());
  for (int u = 0; u < H; ++u) {
    for (int v = 0; v < W; ++v) {
      ix[u * W + v] = pixel_to_norm(v, W);
      iy[u * W + v] = pixel_to_norm(u, H);
    }
  }
  std::vector<double> rx(ix.size()), ry(ix.size());
  double residual = std::numeric_limits<double>::infinity();
  for (int k = 0;; ++k) {
    // rx, ry <- fwd o inv - identity
    residual = 0.0;
    for (int u = 0; u < H; ++u) {
      for (int v = 0; v < W; ++v) {
        const std::size_t i = u * W + v;
        double dx, dy;
        sample_displacement(fwd, norm_to_pixel(iy[i], H), norm_to_pixel(ix[i], W), dx, dy);
        rx[i] = ix[i] + dx - pixel_to_norm(v, W);
        ry[i] = iy[i] + dy - pixel_to_norm(u, H);
        if (u > 0 && v > 0 && u + 1 < H && v + 1 < W) {
          residual = std::max({residual, std::abs(rx[i]), std::abs(ry[i])});
        }
      }
    }
    if (residual <= opts.tol || k == opts.max_iters) break;
    for (std::size_t i = 0; i < ix.size(); ++i) {
      ix[i] -= opts.damping * rx[i];
      iy[i] -= opts.damping * ry[i];
    }
  }
  if (!(residual <= opts.tol)) {
    throw ConvergenceError("invert_mapping: no convergence after " +
                               std::to_string(opts.max_iters) +
                               " iterations, max residual " + std::to_string(residual),
                           residual);
  }
  GridMapping inv(H, W);
  for (std::size_t i = 0; i < ix.size(); ++i) {
    inv.coords()[2 * i] = static_cast<float>(ix[i]);
    inv.coords()[2 * i + 1] = static_cast<float>(iy[i]);
  }
  return inv;
}

double max_abs_difference(const GridMapping& a, const GridMapping& b) {
  if (!a.same_shape(b)) throw InvalidArgument("max_abs_difference: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.coords().size(); ++i) {
    worst = std::max(worst, std::abs(double(a.coords()[i]) - b.coords()[i]));
  }
  return worst;
}

double min_jacobian_determinant(const GridMapping& map) {
  require_nonempty(map, "min_jacobian_determinant");
  const int H = map.height(), W = map.width();
  if (H < 2 || W < 2) return 1.0;
  const double sx = 0.5 * (W - 1), sy = 0.5 * (H - 1);
  double worst = std::numeric_limits<double>::infinity();
  for (int u = 0; u + 1 < H; ++u) {
    for (int v = 0; v + 1 < W; ++v) {
      const double xv = (map.x(u, v + 1) - map.x(u, v)) * sx;
      const double yv = (map.y(u, v + 1) - map.y(u, v)) * sy;
      const double xu = (map.x(u + 1, v) - map.x(u, v)) * sx;
      const double yu = (map.y(u + 1, v) - map.y(u, v)) * sy;
      worst = std::min(worst, xv * yu - xu * yv);
    }
  }
  return worst;
}

}  // namespace dvd
