#include <algorithm>
#include <cmath>

#include <opencv2/video/tracking.hpp>

#include "dvd/errors.hpp"
#include "dvd/metrics.hpp"

namespace dvd {

namespace {

cv::Mat gray8(const DocumentImage& img) {
  const DocumentImage g = to_gray(img);
  cv::Mat m(g.height(), g.width(), CV_8UC1);
  for (int r = 0; r < g.height(); ++r) {
    for (int c = 0; c < g.width(); ++c) {
      m.at<std::uint8_t>(r, c) =
          static_cast<std::uint8_t>(std::lround(std::clamp(g.at(r, c), 0.0f, 1.0f) * 255.0f));
    }
  }
  return m;
}

FlowField from_mat(const cv::Mat& flow) {
  FlowField f{flow.rows, flow.cols, std::vector<float>(static_cast<std::size_t>(flow.rows) * flow.cols * 2)};
  for (int r = 0; r < flow.rows; ++r) {
    const auto* row = flow.ptr<cv::Point2f>(r);
    for (int c = 0; c < flow.cols; ++c) {
      f.uv[2 * (static_cast<std::size_t>(r) * flow.cols + c)] = row[c].x;
      f.uv[2 * (static_cast<std::size_t>(r) * flow.cols + c) + 1] = row[c].y;
    }
  }
  return f;
}

void check_pair(const DocumentImage& a, const DocumentImage& b) {
  if (a.empty() || a.height() != b.height() || a.width() != b.width()) {
    throw InvalidArgument("flow: images must be non-empty and equally sized");
  }
}

class DisFlow final : public FlowBackend {
 public:
  FlowField compute(const DocumentImage& from, const DocumentImage& to) const override {
    check_pair(from, to);
    auto dis = cv::DISOpticalFlow::create(cv::DISOpticalFlow::PRESET_MEDIUM);
    dis->setPatchSize(8);
    dis->setPatchStride(3);
    dis->setGradientDescentIterations(25);
    dis->setVariationalRefinementIterations(10);
    dis->setUseMeanNormalization(true);
    dis->setUseSpatialPropagation(true);
    cv::Mat flow;
    dis->calc(gray8(from), gray8(to), flow);
    return from_mat(flow);
  }
  std::string id() const override { return "opencv-dis-medium-p8s3-vr10"; }
};

class FarnebackFlow final : public FlowBackend {
 public:
  FlowField compute(const DocumentImage& from, const DocumentImage& to) const override {
    check_pair(from, to);
    cv::Mat flow;
    cv::calcOpticalFlowFarneback(gray8(from), gray8(to), flow, 0.5, 4, 15, 5, 5, 1.1, 0);
    return from_mat(flow);
  }
  std::string id() const override { return "opencv-farneback-l4w15"; }
};

}  // namespace

std::unique_ptr<FlowBackend> make_flow_backend(std::string_view name) {
  if (name == "dis") return std::make_unique<DisFlow>();
  if (name == "farneback") return std::make_unique<FarnebackFlow>();
  throw InvalidArgument("unknown flow backend '" + std::string(name) + "'");
}

}  // namespace dvd
