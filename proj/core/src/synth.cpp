#include "dvd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "dvd/errors.hpp"
#include "dvd/rng.hpp"

namespace dvd {

namespace {

constexpr double kPi = std::numbers::pi;

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& all, const char* what) {
  for (E e : all) {
    if (to_string(e) == s) return e;
  }
  throw InvalidArgument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

void fill_rect(DocumentImage& img, int r0, int c0, int r1, int c1, float v0, float v1, float v2) {
  r0 = std::max(r0, 0), c0 = std::max(c0, 0);
  r1 = std::min(r1, img.height()), c1 = std::min(c1, img.width());
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      img.at(r, c, 0) = v0;
      if (img.channels() == 3) {
        img.at(r, c, 1) = v1;
        img.at(r, c, 2) = v2;
      }
    }
  }
}

// Writes a block of text lines into [r0, r1) x [c0, c1); returns the row
// after the last line.
int draw_text_block(FlatDocument& doc, Rng& rng, int r0, int r1, int c0, int c1,
                    int line_h, int pitch, float ink) {
  int r = r0;
  while (r + line_h <= r1) {
    const bool paragraph_end = rng.uniform() < 0.18;
    const int width = c1 - c0;
    const int end = paragraph_end ? c0 + static_cast<int>(width * rng.uniform(0.3, 0.8)) : c1;
    int c = c0;
    while (c < end) {
      const int word = std::max(2, static_cast<int>(line_h * rng.uniform(1.2, 4.5)));
      const int stop = std::min(c + word, end);
      fill_rect(doc.image, r, c, r + line_h, stop, ink, ink, ink);
      c = stop + std::max(2, line_h / 2);
    }
    fill_rect(doc.textline_mask, r, c0, r + line_h, end, 1.0f, 1.0f, 1.0f);
    r += pitch;
    if (paragraph_end) r += pitch / 2;
  }
  return r;
}

// Displacement-gradient bound (Frobenius norm, pixel units) of map - identity.
double max_displacement_gradient(const GridMapping& m) {
  const int H = m.height(), W = m.width();
  const double sx = 0.5 * (W - 1), sy = 0.5 * (H - 1);
  double worst = 0.0;
  for (int u = 0; u + 1 < H; ++u) {
    for (int v = 0; v + 1 < W; ++v) {
      const double xv = (m.x(u, v + 1) - m.x(u, v)) * sx - 1.0;
      const double yv = (m.y(u, v + 1) - m.y(u, v)) * sy;
      const double xu = (m.x(u + 1, v) - m.x(u, v)) * sx;
      const double yu = (m.y(u + 1, v) - m.y(u, v)) * sy - 1.0;
      worst = std::max(worst, std::sqrt(xv * xv + yv * yv + xu * xu + yu * yu));
    }
  }
  return worst;
}

void add_displacement(GridMapping& m, const cv::Mat& dx, const cv::Mat& dy) {
  for (int u = 0; u < m.height(); ++u) {
    for (int v = 0; v < m.width(); ++v) {
      m.x(u, v) += static_cast<float>(dx.at<double>(u, v));
      m.y(u, v) += static_cast<float>(dy.at<double>(u, v));
    }
  }
}

GridMapping curve_field(const WarpSpec& spec, double amp, int H, int W, Rng& rng) {
  GridMapping m = GridMapping::identity(H, W);
  const bool along_y = rng.uniform() < 0.5;  // displacement in y varying with x
  const int n = along_y ? W : H;
  const double peak = pixel_to_norm(rng.uniform_int(0, n - 1), n);
  const double omega = kPi * std::max(spec.shape, 0.0);
  for (int u = 0; u < H; ++u) {
    for (int v = 0; v < W; ++v) {
      const double s = along_y ? pixel_to_norm(v, W) : pixel_to_norm(u, H);
      const double d = amp * std::cos(omega * (s - peak));
      if (along_y) {
        m.y(u, v) += static_cast<float>(d);
      } else {
        m.x(u, v) += static_cast<float>(d);
      }
    }
  }
  return m;
}

GridMapping fold_field(const WarpSpec& spec, double amp, int H, int W, Rng& rng) {
  const int folds = std::clamp(static_cast<int>(std::lround(spec.shape)), 1, 6);
  const double theta = rng.uniform(0.0, kPi);
  const double phi = rng.uniform(0.0, 2.0 * kPi);
  const double half_width = rng.uniform(0.35, 0.7);
  std::vector<double> centres(folds), signs(folds);
  for (int k = 0; k < folds; ++k) {
    centres[k] = rng.uniform(-0.6, 0.6);
    signs[k] = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  cv::Mat profile(H, W, CV_64F);
  double peak = 0.0;
  for (int u = 0; u < H; ++u) {
    for (int v = 0; v < W; ++v) {
      const double s = pixel_to_norm(v, W) * std::cos(theta) + pixel_to_norm(u, H) * std::sin(theta);
      double p = 0.0;
      for (int k = 0; k < folds; ++k) {
        p += signs[k] * std::max(0.0, 1.0 - std::abs(s - centres[k]) / half_width);
      }
      profile.at<double>(u, v) = p;
      peak = std::max(peak, std::abs(p));
    }
  }
  if (peak > 0.0) profile *= amp / peak;
  const double sigma = std::max(0.8, 0.02 * std::max(H, W));
  cv::GaussianBlur(profile, profile, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
  GridMapping m = GridMapping::identity(H, W);
  add_displacement(m, profile * std::cos(phi), profile * std::sin(phi));
  return m;
}

GridMapping crumple_field(const WarpSpec& spec, double amp, int H, int W, Rng& rng) {
  const double cutoff = std::max(spec.shape, 0.5);
  constexpr int kModes = 10;
  cv::Mat comp[2];
  for (auto& c : comp) {
    c = cv::Mat::zeros(H, W, CV_64F);
    for (int k = 0; k < kModes; ++k) {
      const double f = rng.uniform(0.5, cutoff);
      const double dir = rng.uniform(0.0, 2.0 * kPi);
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      const double kx = f * std::cos(dir), ky = f * std::sin(dir);
      for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
          c.at<double>(u, v) +=
              std::cos(kPi * (kx * pixel_to_norm(v, W) + ky * pixel_to_norm(u, H)) + phase) / f;
        }
      }
    }
    double lo, hi;
    cv::minMaxLoc(c, &lo, &hi);
    const double peak = std::max(std::abs(lo), std::abs(hi));
    if (peak > 0.0) c *= amp / peak;
  }
  GridMapping m = GridMapping::identity(H, W);
  add_displacement(m, comp[0], comp[1]);
  return m;
}

// Lighting as a per-channel gain on the whole scene.
std::array<float, 3> lighting_gain(Lighting l) {
  switch (l) {
    case Lighting::Bright: return {1.0f, 1.0f, 1.0f};
    case Lighting::Dark: return {0.55f, 0.55f, 0.55f};
    case Lighting::Warm: return {1.0f, 0.88f, 0.70f};
  }
  return {1.0f, 1.0f, 1.0f};
}

void apply_gain(DocumentImage& img, const std::array<float, 3>& g) {
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      for (int k = 0; k < img.channels(); ++k) img.at(r, c, k) *= g[k % 3];
    }
  }
}

DocumentImage binarize(const DocumentImage& m) {
  DocumentImage out = m;
  for (float& p : out.pixels()) p = p > 0.5f ? 1.0f : 0.0f;
  return out;
}

// Keystone homography folded after the warp, then an isotropic fit into the
// frame. Amplitude-free frontal captures are left untouched.
GridMapping frame_field(const GridMapping& field, CaptureAngle angle, std::uint64_t seed) {
  GridMapping g = field;
  if (angle == CaptureAngle::Oblique) {
    Rng rng(seed);
    const double k = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.08, 0.18);
    const bool vertical = rng.uniform() < 0.5;
    for (int u = 0; u < g.height(); ++u) {
      for (int v = 0; v < g.width(); ++v) {
        const double x = g.x(u, v), y = g.y(u, v);
        const double w = 1.0 + k * (vertical ? y : x);
        g.x(u, v) = static_cast<float>(x / w);
        g.y(u, v) = static_cast<float>(y / w);
      }
    }
  }
  float peak = 0.0f;
  for (float c : g.coords()) peak = std::max(peak, std::abs(c));
  if (peak > 1.0f) {
    const float s = 1.0f / peak;
    for (float& c : g.coords()) c = std::clamp(c * s, -1.0f, 1.0f);
  }
  return g;
}

}  // namespace

std::string_view to_string(Layout v) {
  switch (v) {
    case Layout::SingleColumn: return "single_column";
    case Layout::TwoColumn: return "two_column";
    case Layout::Complex: return "complex";
  }
  return "?";
}

std::string_view to_string(Lighting v) {
  switch (v) {
    case Lighting::Bright: return "bright";
    case Lighting::Dark: return "dark";
    case Lighting::Warm: return "warm";
  }
  return "?";
}

std::string_view to_string(CaptureAngle v) {
  switch (v) {
    case CaptureAngle::Frontal: return "frontal";
    case CaptureAngle::Oblique: return "oblique";
  }
  return "?";
}

std::string_view to_string(WarpKind v) {
  switch (v) {
    case WarpKind::Curve: return "curve";
    case WarpKind::Fold: return "fold";
    case WarpKind::Crumple: return "crumple";
  }
  return "?";
}

Layout parse_layout(std::string_view s) { return parse_enum(s, kAllLayouts, "layout"); }
Lighting parse_lighting(std::string_view s) { return parse_enum(s, kAllLightings, "lighting"); }
CaptureAngle parse_angle(std::string_view s) { return parse_enum(s, kAllAngles, "capture angle"); }
WarpKind parse_warp_kind(std::string_view s) { return parse_enum(s, kAllWarpKinds, "warp kind"); }

std::string DomainTags::key() const {
  std::string k;
  k.append(to_string(layout)).append("|").append(to_string(lighting)).append("|");
  k.append(to_string(angle)).append("|").append(to_string(warp_kind));
  return k;
}

FlatDocument render_flat_document(Layout layout, int size, std::uint64_t seed) {
  if (size < 64) throw InvalidArgument("render_flat_document: size must be >= 64");
  Rng rng(seed);
  const float paper = static_cast<float>(rng.uniform(0.90, 0.97));
  const float tint_g = paper - static_cast<float>(rng.uniform(0.0, 0.02));
  const float tint_b = paper - static_cast<float>(rng.uniform(0.0, 0.05));
  FlatDocument doc{DocumentImage(size, size, 3), DocumentImage(size, size, 1)};
  fill_rect(doc.image, 0, 0, size, size, paper, tint_g, tint_b);

  const int margin = std::max(3, static_cast<int>(size * rng.uniform(0.07, 0.11)));
  // Glyph scale floors keep text resolvable after two bilinear resamplings.
  const int line_h = std::max(4, static_cast<int>(std::lround(size * rng.uniform(0.022, 0.032))));
  const int pitch = line_h + std::max(3, static_cast<int>(std::lround(line_h * rng.uniform(0.7, 1.1))));
  const float ink = static_cast<float>(rng.uniform(0.08, 0.25));
  const int top = margin, bottom = size - margin, left = margin, right = size - margin;
  const int gutter = std::max(4, static_cast<int>(size * 0.06));
  const int mid = size / 2;

  switch (layout) {
    case Layout::SingleColumn:
      draw_text_block(doc, rng, top, bottom, left, right, line_h, pitch, ink);
      break;
    case Layout::TwoColumn:
      draw_text_block(doc, rng, top, bottom, left, mid - gutter / 2, line_h, pitch, ink);
      draw_text_block(doc, rng, top, bottom, mid + gutter / 2, right, line_h, pitch, ink);
      break;
    case Layout::Complex: {
      // Title line spanning both columns, a figure block, two text columns.
      const int title_h = line_h * 2;
      fill_rect(doc.image, top, left + (right - left) / 6, top + title_h, right - (right - left) / 6,
                ink, ink, ink);
      fill_rect(doc.textline_mask, top, left + (right - left) / 6, top + title_h,
                right - (right - left) / 6, 1.0f, 1.0f, 1.0f);
      const int body = top + title_h + pitch;
      const bool figure_left = rng.uniform() < 0.5;
      const int fig_h = static_cast<int>((bottom - body) * rng.uniform(0.3, 0.45));
      const int fc0 = figure_left ? left : mid + gutter / 2;
      const int fc1 = figure_left ? mid - gutter / 2 : right;
      const float fig = static_cast<float>(rng.uniform(0.45, 0.7));
      fill_rect(doc.image, body, fc0, body + fig_h, fc1, fig, fig * 0.95f, fig * 0.9f);
      draw_text_block(doc, rng, body + fig_h + pitch, bottom, fc0, fc1, line_h, pitch, ink);
      const int oc0 = figure_left ? mid + gutter / 2 : left;
      const int oc1 = figure_left ? right : mid - gutter / 2;
      draw_text_block(doc, rng, body, bottom, oc0, oc1, line_h, pitch, ink);
      break;
    }
  }

  // Soft print edges.
  cv::Mat m(size, size, CV_32FC3, doc.image.pixels().data());
  cv::GaussianBlur(m, m, cv::Size(0, 0), 0.8, 0.8, cv::BORDER_REPLICATE);
  return doc;
}

ForwardField sample_forward_field_ex(const WarpSpec& spec, int height, int width) {
  if (height < 2 || width < 2) throw InvalidArgument("sample_forward_field: grid too small");
  if (!(spec.amplitude >= 0.0 && spec.amplitude <= kMaxWarpAmplitude)) {
    throw InvalidArgument("sample_forward_field: amplitude must lie in [0, 0.15]");
  }
  if (!(spec.shape > 0.0)) throw InvalidArgument("sample_forward_field: shape must be positive");
  if (spec.amplitude == 0.0) return {GridMapping::identity(height, width), 0.0};

  double amp = spec.amplitude;
  for (int attempt = 0; attempt <= 10; ++attempt) {
    Rng rng(derive_seed(spec.seed, attempt));
    GridMapping m;
    switch (spec.kind) {
      case WarpKind::Curve: m = curve_field(spec, amp, height, width, rng); break;
      case WarpKind::Fold: m = fold_field(spec, amp, height, width, rng); break;
      case WarpKind::Crumple: m = crumple_field(spec, amp, height, width, rng); break;
    }
    // Jacobian determinant > 0 everywhere, and a contraction bound on the
    // displacement so the fixed-point inverse converges.
    if (min_jacobian_determinant(m) > 0.0 && max_displacement_gradient(m) < 0.9) {
      return {std::move(m), amp};
    }
    amp *= 0.7;
  }
  throw GenerationError("sample_forward_field: no bijective field after 10 retries");
}

GridMapping sample_forward_field(const WarpSpec& spec, int height, int width) {
  return sample_forward_field_ex(spec, height, width).map;
}

SampleRecord generate_pair(const FlatDocument& flat, const WarpSpec& spec, const PairOptions& opts) {
  const int H = flat.image.height(), W = flat.image.width();
  if (flat.image.channels() != 3 || !flat.textline_mask.same_shape(DocumentImage(H, W, 1))) {
    throw InvalidArgument("generate_pair: expected RGB page and matching 1-channel mask");
  }
  if (opts.latent_size < 2 || opts.latent_size > std::min(H, W)) {
    throw InvalidArgument("generate_pair: latent size must lie in [2, image size]");
  }
  ForwardField field = sample_forward_field_ex(spec, H, W);
  GridMapping gt = frame_field(field.map, opts.angle, opts.seed);
  InversionOptions inv_opts;
  inv_opts.max_iters = 200;
  inv_opts.tol = 1e-5;
  const GridMapping inv = invert_mapping(gt, inv_opts);

  const auto gain = lighting_gain(opts.lighting);
  DocumentImage lit = flat.image;
  apply_gain(lit, gain);

  DocumentImage page = apply_backward_mapping(lit, inv, 0.0f);
  const DocumentImage coverage = apply_backward_mapping(DocumentImage(H, W, 1, 1.0f), inv, 0.0f);
  // Desk behind the page.
  const std::array<float, 3> desk{0.22f * gain[0], 0.20f * gain[1], 0.18f * gain[2]};
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const float a = coverage.at(r, c);
      for (int k = 0; k < 3; ++k) {
        page.at(r, c, k) = a * page.at(r, c, k) + (1.0f - a) * desk[k];
      }
    }
  }

  SampleRecord rec;
  rec.warped = std::move(page);
  rec.flat = std::move(lit);
  rec.gt_map_latent = downsample_mapping(gt, opts.latent_size, opts.latent_size);
  rec.gt_map_full = std::move(gt);
  rec.fg_mask = binarize(coverage);
  rec.textline_mask = binarize(apply_backward_mapping(flat.textline_mask, inv, 0.0f));
  rec.domains.lighting = opts.lighting;
  rec.domains.angle = opts.angle;
  rec.domains.warp_kind = spec.kind;
  rec.amplitude = field.amplitude;
  rec.seed = spec.seed;
  return rec;
}

SampleRecord make_sample(std::string id, const DomainTags& tags, int size, int latent_size,
                         std::uint64_t seed) {
  Rng rng(seed);
  WarpSpec spec;
  spec.kind = tags.warp_kind;
  spec.amplitude = rng.uniform(0.04, 0.12);
  switch (tags.warp_kind) {
    case WarpKind::Curve: spec.shape = rng.uniform(0.5, 1.5); break;
    case WarpKind::Fold: spec.shape = rng.uniform_int(1, 3); break;
    case WarpKind::Crumple: spec.shape = rng.uniform(1.5, 3.0); break;
  }
  spec.seed = derive_seed(seed, 1);
  const FlatDocument flat = render_flat_document(tags.layout, size, derive_seed(seed, 2));
  PairOptions opts;
  opts.latent_size = latent_size;
  opts.lighting = tags.lighting;
  opts.angle = tags.angle;
  opts.seed = derive_seed(seed, 3);
  SampleRecord rec = generate_pair(flat, spec, opts);
  rec.id = std::move(id);
  rec.domains = tags;
  rec.seed = seed;
  return rec;
}

DomainTags corpus_tags(const CorpusOptions& opts, int index) {
  if (opts.layouts.empty()) throw InvalidArgument("corpus: no layouts requested");
  int i = index;
  DomainTags t;
  t.warp_kind = kAllWarpKinds[i % kAllWarpKinds.size()];
  i /= static_cast<int>(kAllWarpKinds.size());
  t.layout = opts.layouts[i % opts.layouts.size()];
  i /= static_cast<int>(opts.layouts.size());
  t.lighting = kAllLightings[i % kAllLightings.size()];
  i /= static_cast<int>(kAllLightings.size());
  t.angle = kAllAngles[i % kAllAngles.size()];
  return t;
}

std::vector<SampleRecord> generate_corpus(const CorpusOptions& opts) {
  if (opts.count <= 0) throw InvalidArgument("corpus: count must be positive");
  std::vector<SampleRecord> out;
  out.reserve(opts.count);
  for (int i = 0; i < opts.count; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%06d", i);
    out.push_back(make_sample(id, corpus_tags(opts, i), opts.size, opts.latent_size,
                              derive_seed(opts.seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

double interior_psnr(const DocumentImage& a, const DocumentImage& b, int border) {
  if (!a.same_shape(b)) throw InvalidArgument("interior_psnr: shape mismatch");
  double se = 0.0;
  std::size_t n = 0;
  for (int r = border; r < a.height() - border; ++r) {
    for (int c = border; c < a.width() - border; ++c) {
      for (int k = 0; k < a.channels(); ++k) {
        const double d = double(a.at(r, c, k)) - b.at(r, c, k);
        se += d * d;
        ++n;
      }
    }
  }
  if (n == 0) throw InvalidArgument("interior_psnr: border leaves no pixels");
  const double mse = se / n;
  return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
}

}  // namespace dvd
