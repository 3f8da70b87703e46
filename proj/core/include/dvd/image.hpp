#pragma once

#include <cstddef>
#include <vector>

#include "dvd/errors.hpp"

namespace dvd {

/// Row-major, channel-interleaved image with intensities in [0, 1].
/// Also used for single-channel masks and feature planes.
class DocumentImage {
 public:
  DocumentImage() = default;
  DocumentImage(int height, int width, int channels, float value = 0.0f)
      : height_(height), width_(width), channels_(channels),
        pixels_(static_cast<std::size_t>(height) * width * channels, value) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw InvalidArgument("DocumentImage: dimensions must be positive");
    }
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t size() const noexcept { return pixels_.size(); }

  float& at(int row, int col, int ch = 0) {
    return pixels_[index(row, col, ch)];
  }
  float at(int row, int col, int ch = 0) const {
    return pixels_[index(row, col, ch)];
  }

  std::vector<float>& pixels() noexcept { return pixels_; }
  const std::vector<float>& pixels() const noexcept { return pixels_; }

  bool same_shape(const DocumentImage& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

 private:
  std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> pixels_;
};

/// Luma conversion (BT.601 weights); single-channel images are copied.
DocumentImage to_gray(const DocumentImage& img);

/// Bilinear resize with corner-aligned sampling.
DocumentImage resize_bilinear(const DocumentImage& img, int height, int width);

}  // namespace dvd
