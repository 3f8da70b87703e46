#include "dvd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvd/errors.hpp"

namespace dvd {

namespace {

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
};

Plane luma_plane(const DocumentImage& img) {
  const DocumentImage g = to_gray(img);
  Plane p{g.height(), g.width(), std::vector<double>(g.pixels().begin(), g.pixels().end())};
  return p;
}

std::array<double, 11> gaussian_window() {
  std::array<double, 11> k{};
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    k[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
    sum += k[i];
  }
  for (double& x : k) x /= sum;
  return k;
}

// Separable "valid" filtering with the 11-tap Gaussian.
Plane filter_valid(const Plane& in) {
  static const auto k = gaussian_window();
  Plane tmp{in.h, in.w - 10, std::vector<double>(static_cast<std::size_t>(in.h) * (in.w - 10))};
  for (int r = 0; r < in.h; ++r) {
    for (int c = 0; c < tmp.w; ++c) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[i] * in.at(r, c + i);
      tmp.at(r, c) = s;
    }
  }
  Plane out{in.h - 10, tmp.w, std::vector<double>(static_cast<std::size_t>(in.h - 10) * tmp.w)};
  for (int r = 0; r < out.h; ++r) {
    for (int c = 0; c < out.w; ++c) {
      double s = 0.0;
      for (int i = 0; i < 11; ++i) s += k[i] * tmp.at(r + i, c);
      out.at(r, c) = s;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane o = a;
  for (std::size_t i = 0; i < o.v.size(); ++i) o.v[i] = a.v[i] * b.v[i];
  return o;
}

Plane downsample2(const Plane& in) {
  Plane o{in.h / 2, in.w / 2, {}};
  o.v.resize(static_cast<std::size_t>(o.h) * o.w);
  for (int r = 0; r < o.h; ++r) {
    for (int c = 0; c < o.w; ++c) {
      o.at(r, c) = 0.25 * (in.at(2 * r, 2 * c) + in.at(2 * r, 2 * c + 1) + in.at(2 * r + 1, 2 * c) +
                           in.at(2 * r + 1, 2 * c + 1));
    }
  }
  return o;
}

// Mean luminance*contrast*structure (ssim) and contrast*structure (cs).
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b) {
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const Plane mu_a = filter_valid(a), mu_b = filter_valid(b);
  const Plane aa = filter_valid(product(a, a)), bb = filter_valid(product(b, b)),
              ab = filter_valid(product(a, b));
  double ssim = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double va = aa.v[i] - ma * ma, vb = bb.v[i] - mb * mb, cov = ab.v[i] - ma * mb;
    const double c = (2.0 * cov + C2) / (va + vb + C2);
    const double l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
    cs += c;
    ssim += l * c;
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {ssim / n, cs / n};
}

}  // namespace

int ms_ssim_scales(int min_side) {
  if (min_side >= 176) return 5;
  int scales = 0;
  for (int side = min_side; side >= 11 && scales < 5; side /= 2) ++scales;
  return scales;
}

double ms_ssim(const DocumentImage& a, const DocumentImage& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("ms_ssim: empty image");
  if (a.height() != b.height() || a.width() != b.width()) {
    throw InvalidArgument("ms_ssim: image sizes differ");
  }
  const int scales = ms_ssim_scales(std::min(a.height(), a.width()));
  if (scales < 1) throw InvalidArgument("ms_ssim: images smaller than the 11x11 window");
  double wsum = 0.0;
  for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];

  Plane pa = luma_plane(a), pb = luma_plane(b);
  double result = 1.0;
  for (int s = 0; s < scales; ++s) {
    const auto [ssim, cs] = ssim_terms(pa, pb);
    const double term = s + 1 == scales ? ssim : cs;
    result *= std::pow(std::max(term, 0.0), kMsSsimWeights[s] / wsum);
    if (s + 1 < scales) {
      pa = downsample2(pa);
      pb = downsample2(pb);
    }
  }
  return std::clamp(result, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

namespace {

struct Prepared {
  DocumentImage from, to;
};

Prepared prepare_pair(const DocumentImage& dewarped, const DocumentImage& gt, const DistortionOptions& opts) {
  if (dewarped.empty() || gt.empty()) throw InvalidArgument("distortion: empty image");
  DocumentImage d = to_gray(dewarped), g = to_gray(gt);
  int H = g.height(), W = g.width();
  if (opts.max_side > 0 && std::max(H, W) > opts.max_side) {
    const double s = static_cast<double>(opts.max_side) / std::max(H, W);
    H = std::max(1, static_cast<int>(std::lround(H * s)));
    W = std::max(1, static_cast<int>(std::lround(W * s)));
  }
  return {resize_bilinear(d, H, W), resize_bilinear(g, H, W)};
}

// Sobel gradient magnitude.
std::vector<double> gradient_magnitude(const DocumentImage& g) {
  const int H = g.height(), W = g.width();
  std::vector<double> out(static_cast<std::size_t>(H) * W, 0.0);
  auto px = [&](int r, int c) {
    return static_cast<double>(g.at(std::clamp(r, 0, H - 1), std::clamp(c, 0, W - 1)));
  };
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
      const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                        (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
      out[static_cast<std::size_t>(r) * W + c] = std::hypot(gx, gy);
    }
  }
  return out;
}

double mean_magnitude(const FlowField& f) {
  double s = 0.0;
  for (int r = 0; r < f.height; ++r) {
    for (int c = 0; c < f.width; ++c) s += std::hypot(f.dx(r, c), f.dy(r, c));
  }
  return s / (static_cast<double>(f.height) * f.width);
}

double aligned_from_flow(const FlowField& f, const DocumentImage& gt_gray) {
  const int H = f.height, W = f.width;
  struct Pt {
    double px, py, qx, qy, w;
  };
  std::vector<Pt> pts;
  pts.reserve(static_cast<std::size_t>(H) * W);
  const std::vector<double> grad = gradient_magnitude(gt_gray);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double qx = c + f.dx(r, c), qy = r + f.dy(r, c);
      if (qx < 0 || qx > W - 1 || qy < 0 || qy > H - 1) continue;
      pts.push_back({double(c), double(r), qx, qy, grad[static_cast<std::size_t>(r) * W + c]});
    }
  }
  if (pts.empty()) return std::numeric_limits<double>::infinity();
  double mpx = 0, mpy = 0, mqx = 0, mqy = 0;
  for (const Pt& p : pts) mpx += p.px, mpy += p.py, mqx += p.qx, mqy += p.qy;
  const double n = static_cast<double>(pts.size());
  mpx /= n, mpy /= n, mqx /= n, mqy /= n;
  double num = 0, den = 0;
  for (const Pt& p : pts) {
    num += (p.px - mpx) * (p.qx - mqx) + (p.py - mpy) * (p.qy - mqy);
    den += (p.px - mpx) * (p.px - mpx) + (p.py - mpy) * (p.py - mpy);
  }
  const double s = den > 0 ? num / den : 1.0;
  const double tx = mqx - s * mpx, ty = mqy - s * mpy;
  double wsum = 0, acc = 0, plain = 0;
  for (const Pt& p : pts) {
    const double res = std::hypot(p.qx - (s * p.px + tx), p.qy - (s * p.py + ty));
    acc += p.w * res;
    wsum += p.w;
    plain += res;
  }
  return wsum > 0 ? acc / wsum : plain / n;
}

}  // namespace

Distortion distortion_metrics(const DocumentImage& dewarped, const DocumentImage& gt,
                              const FlowBackend& flow, const DistortionOptions& opts) {
  if (dewarped.height() != gt.height() || dewarped.width() != gt.width()) {
    throw InvalidArgument("distortion: image sizes differ");
  }
  const Prepared p = prepare_pair(dewarped, gt, opts);
  const FlowField f = flow.compute(p.from, p.to);
  return {mean_magnitude(f), aligned_from_flow(f, p.to)};
}

double local_distortion(const DocumentImage& dewarped, const DocumentImage& gt, const FlowBackend& flow,
                        const DistortionOptions& opts) {
  return distortion_metrics(dewarped, gt, flow, opts).ld;
}

double aligned_distortion(const DocumentImage& dewarped, const DocumentImage& gt, const FlowBackend& flow,
                          const DistortionOptions& opts) {
  return distortion_metrics(dewarped, gt, flow, opts).ad;
}

// ---------------------------------------------------------------------------

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto b = static_cast<unsigned char>(s[i]);
    int len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    char32_t cp = len == 1 ? b : b & (0x7F >> len);
    bool ok = true;
    for (int k = 1; k < len; ++k) {
      const auto cb = static_cast<unsigned char>(s[i + k]);
      if ((cb >> 6) != 0x2) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cb & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::size_t edit_distance(std::string_view hyp, std::string_view ref) {
  const std::u32string a = decode_utf8(hyp), b = decode_utf8(ref);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double char_error_rate(std::string_view hyp, std::string_view ref) {
  const std::size_t n = decode_utf8(ref).size();
  if (n == 0) throw InvalidArgument("char_error_rate: reference is empty");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(n);
}

}  // namespace dvd
