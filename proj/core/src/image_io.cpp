#include "dvd/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dvd/errors.hpp"

namespace dvd {

namespace {

cv::Mat to_mat8(const DocumentImage& img) {
  if (img.empty()) throw InvalidArgument("png: empty image");
  const int C = img.channels();
  if (C != 1 && C != 3) throw InvalidArgument("png: only 1 or 3 channels supported");
  cv::Mat m(img.height(), img.width(), C == 1 ? CV_8UC1 : CV_8UC3);
  for (int r = 0; r < img.height(); ++r) {
    auto* row = m.ptr<std::uint8_t>(r);
    for (int c = 0; c < img.width(); ++c) {
      for (int k = 0; k < C; ++k) {
        // OpenCV stores BGR.
        const int src_k = C == 3 ? 2 - k : k;
        const float v = std::clamp(img.at(r, c, src_k), 0.0f, 1.0f);
        row[c * C + k] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return m;
}

cv::Mat to_mat32(const DocumentImage& img) {
  cv::Mat m(img.height(), img.width(), CV_32FC(img.channels()));
  std::copy(img.pixels().begin(), img.pixels().end(), m.ptr<float>());
  return m;
}

}  // namespace

DocumentImage to_gray(const DocumentImage& img) {
  if (img.empty()) throw InvalidArgument("to_gray: empty image");
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw InvalidArgument("to_gray: expected 1 or 3 channels");
  DocumentImage out(img.height(), img.width(), 1);
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      out.at(r, c) = 0.299f * img.at(r, c, 0) + 0.587f * img.at(r, c, 1) +
                     0.114f * img.at(r, c, 2);
    }
  }
  return out;
}

DocumentImage resize_bilinear(const DocumentImage& img, int height, int width) {
  if (img.empty() || height <= 0 || width <= 0) {
    throw InvalidArgument("resize_bilinear: empty input or target");
  }
  if (img.height() == height && img.width() == width) return img;
  const bool shrink = height < img.height() && width < img.width();
  cv::Mat dst;
  cv::resize(to_mat32(img), dst, cv::Size(width, height), 0, 0,
             shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  DocumentImage out(height, width, img.channels());
  std::copy(dst.ptr<float>(), dst.ptr<float>() + out.size(), out.pixels().begin());
  return out;
}

std::vector<std::uint8_t> encode_png(const DocumentImage& img) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".png", to_mat8(img), buf)) throw FormatError("png: encode failed");
  return buf;
}

void write_png(const std::filesystem::path& path, const DocumentImage& img) {
  if (!cv::imwrite(path.string(), to_mat8(img))) {
    throw FormatError(path.string() + ": cannot write PNG");
  }
}

DocumentImage read_png(const std::filesystem::path& path, int channels) {
  if (!std::filesystem::exists(path)) throw FormatError(path.string() + ": missing image");
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw FormatError(path.string() + ": cannot decode image");
  if (m.depth() != CV_8U) {
    cv::Mat tmp;
    m.convertTo(tmp, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 255.0);
    m = tmp;
  }
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
  const int want = channels == 0 ? m.channels() : channels;
  if (want != 1 && want != 3) throw InvalidArgument("read_png: channels must be 0, 1 or 3");
  if (want == 1 && m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
  if (want == 3 && m.channels() == 1) cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
  DocumentImage out(m.rows, m.cols, want);
  for (int r = 0; r < m.rows; ++r) {
    const auto* row = m.ptr<std::uint8_t>(r);
    for (int c = 0; c < m.cols; ++c) {
      for (int k = 0; k < want; ++k) {
        const int dst_k = want == 3 ? 2 - k : k;
        out.at(r, c, dst_k) = row[c * want + k] / 255.0f;
      }
    }
  }
  return out;
}

DocumentImage quantize_8bit(const DocumentImage& img) {
  DocumentImage out = img;
  for (float& p : out.pixels()) {
    p = static_cast<float>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  }
  return out;
}

}  // namespace dvd
