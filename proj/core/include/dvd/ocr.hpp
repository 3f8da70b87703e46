#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "dvd/image.hpp"

namespace dvd {

inline constexpr const char* kOcrPrompt = "OCR the plain text";

class OcrClient {
 public:
  virtual ~OcrClient() = default;
  /// Transcript of `img`. Throws ServiceError when no transcript could be obtained.
  virtual std::string transcribe(const DocumentImage& img) = 0;
  virtual std::string id() const = 0;
};

struct OcrOptions {
  std::string endpoint;  // http://host[:port]/path
  std::string api_key;   // sent as a bearer token when non-empty
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::chrono::milliseconds backoff{250};  // doubled per retry
  int concurrency = 2;
};

/// Reads the key from OCR_API_KEY when `opts.api_key` is empty.
OcrOptions ocr_options_from_env(std::string endpoint);

/// POST {"image": <base64 PNG>, "prompt": kOcrPrompt} -> {"text": ...}.
/// Transport errors, 5xx and 429 are retried; other statuses fail at once.
/// At most `concurrency` requests are in flight per client.
class HttpOcrClient final : public OcrClient {
 public:
  explicit HttpOcrClient(OcrOptions opts);
  std::string transcribe(const DocumentImage& img) override;
  std::string id() const override;

 private:
  std::string post_once(const std::string& body, bool& retryable);

  OcrOptions opts_;
  std::string host_, path_;
  std::counting_semaphore<256> slots_;
};

struct OcrMetrics {
  std::optional<double> mmed, mmcer;
  std::string error;  // empty when both values are present
};

/// OCR both images; the flat transcript is the reference. Failures leave
/// the values unset and describe the cause in `error`.
OcrMetrics mllm_ocr_metrics(const DocumentImage& dewarped, const DocumentImage& flat, OcrClient& client);

}  // namespace dvd
