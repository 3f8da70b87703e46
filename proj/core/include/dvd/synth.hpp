#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dvd/image.hpp"
#include "dvd/mapping.hpp"

namespace dvd {

enum class Layout { SingleColumn, TwoColumn, Complex };
enum class Lighting { Bright, Dark, Warm };
enum class CaptureAngle { Frontal, Oblique };
enum class WarpKind { Curve, Fold, Crumple };

inline constexpr std::array kAllLayouts{Layout::SingleColumn, Layout::TwoColumn, Layout::Complex};
inline constexpr std::array kAllLightings{Lighting::Bright, Lighting::Dark, Lighting::Warm};
inline constexpr std::array kAllAngles{CaptureAngle::Frontal, CaptureAngle::Oblique};
inline constexpr std::array kAllWarpKinds{WarpKind::Curve, WarpKind::Fold, WarpKind::Crumple};

std::string_view to_string(Layout v);
std::string_view to_string(Lighting v);
std::string_view to_string(CaptureAngle v);
std::string_view to_string(WarpKind v);

// Parsers throw InvalidArgument on names outside the vocabulary.
Layout parse_layout(std::string_view s);
Lighting parse_lighting(std::string_view s);
CaptureAngle parse_angle(std::string_view s);
WarpKind parse_warp_kind(std::string_view s);

struct DomainTags {
  Layout layout = Layout::SingleColumn;
  Lighting lighting = Lighting::Bright;
  CaptureAngle angle = CaptureAngle::Frontal;
  WarpKind warp_kind = WarpKind::Curve;

  /// "layout|lighting|angle|warp_kind", used as an aggregation key.
  std::string key() const;
  friend bool operator==(const DomainTags&, const DomainTags&) = default;
};

inline constexpr double kMaxWarpAmplitude = 0.15;

/// Parametric deformation. `shape` is the curve frequency (cycles across the
/// page), the fold count, or the crumple roughness (cutoff in cycles per page).
struct WarpSpec {
  WarpKind kind = WarpKind::Curve;
  double amplitude = 0.0;
  double shape = 1.0;
  std::uint64_t seed = 0;
};

struct FlatDocument {
  DocumentImage image;          // 3 channels
  DocumentImage textline_mask;  // 1 channel, {0, 1}
};

/// Light page with dark text-line bars; deterministic in `seed`.
FlatDocument render_flat_document(Layout layout, int size, std::uint64_t seed);

struct ForwardField {
  GridMapping map;
  double amplitude = 0.0;  // after any bijectivity back-off
};

/// Smooth warp field `identity + displacement` over a height x width grid.
/// Retries with amplitude * 0.7 while the Jacobian determinant is not
/// positive; throws GenerationError after 10 retries.
ForwardField sample_forward_field_ex(const WarpSpec& spec, int height, int width);
GridMapping sample_forward_field(const WarpSpec& spec, int height, int width);

struct SampleRecord {
  std::string id;
  DocumentImage warped;         // I_w, 3 channels
  DocumentImage flat;           // I_0, 3 channels
  GridMapping gt_map_latent;
  GridMapping gt_map_full;      // sampling warped at it returns flat
  DocumentImage fg_mask;        // warped frame, {0, 1}
  DocumentImage textline_mask;  // warped frame, {0, 1}
  DomainTags domains;
  double amplitude = 0.0;
  std::uint64_t seed = 0;
};

struct PairOptions {
  int latent_size = 32;
  Lighting lighting = Lighting::Bright;
  CaptureAngle angle = CaptureAngle::Frontal;
  std::uint64_t seed = 0;  // drives the projective pre-transform
};

/// Warps `flat` so that apply_backward_mapping(warped, gt_map_full)
/// reproduces it. Lighting is applied to the scene, i.e. to both images.
SampleRecord generate_pair(const FlatDocument& flat, const WarpSpec& spec,
                           const PairOptions& opts);

/// Draws warp parameters for `tags`, renders a page and warps it.
SampleRecord make_sample(std::string id, const DomainTags& tags, int size,
                         int latent_size, std::uint64_t seed);

struct CorpusOptions {
  int count = 0;
  int size = 128;
  int latent_size = 32;
  std::vector<Layout> layouts{kAllLayouts.begin(), kAllLayouts.end()};
  std::uint64_t seed = 0;
};

/// Domain tags of record `index`: a mixed-radix walk over the cross-product
/// (warp kind fastest, then layout, lighting, angle), so any `count` that is
/// a multiple of the product size covers every combination equally.
DomainTags corpus_tags(const CorpusOptions& opts, int index);
std::vector<SampleRecord> generate_corpus(const CorpusOptions& opts);

double interior_psnr(const DocumentImage& a, const DocumentImage& b, int border);

}  // namespace dvd
