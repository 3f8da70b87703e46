#include "dvd/ocr.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dvd/errors.hpp"
#include "dvd/image_io.hpp"
#include "dvd/metrics.hpp"

namespace dvd {

OcrOptions ocr_options_from_env(std::string endpoint) {
  OcrOptions o;
  o.endpoint = std::move(endpoint);
  if (const char* key = std::getenv("OCR_API_KEY")) o.api_key = key;
  return o;
}

HttpOcrClient::HttpOcrClient(OcrOptions opts)
    : opts_(std::move(opts)), slots_(std::clamp(opts_.concurrency, 1, 256)) {
  const std::string& e = opts_.endpoint;
  if (e.rfind("http://", 0) != 0) {
    throw InvalidArgument("ocr endpoint must start with http:// (got '" + e + "')");
  }
  const auto slash = e.find('/', 7);
  host_ = e.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : e.substr(slash);
  if (host_.size() <= 7) throw InvalidArgument("ocr endpoint has no host: '" + e + "'");
  if (opts_.max_retries < 0) throw InvalidArgument("ocr max_retries must be >= 0");
}

std::string HttpOcrClient::id() const { return "http:" + opts_.endpoint; }

std::string HttpOcrClient::post_once(const std::string& body, bool& retryable) {
  httplib::Client cli(host_);
  const auto secs = opts_.timeout.count() / 1000, usecs = (opts_.timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!opts_.api_key.empty()) headers.emplace("Authorization", "Bearer " + opts_.api_key);

  auto res = cli.Post(path_, headers, body, "application/json");
  if (!res) {
    retryable = true;
    throw ServiceError("ocr request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    retryable = res->status >= 500 || res->status == 429;
    throw ServiceError("ocr endpoint returned HTTP " + std::to_string(res->status));
  }
  retryable = false;
  const auto j = nlohmann::json::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("text") || !j["text"].is_string()) {
    throw ServiceError("ocr response is not {\"text\": string}");
  }
  return j["text"].get<std::string>();
}

std::string HttpOcrClient::transcribe(const DocumentImage& img) {
  const auto png = encode_png(img);
  const nlohmann::json req{{"image", httplib::detail::base64_encode(std::string(png.begin(), png.end()))},
                           {"prompt", kOcrPrompt}};
  const std::string body = req.dump();

  slots_.acquire();
  struct Release {
    std::counting_semaphore<256>& s;
    ~Release() { s.release(); }
  } release{slots_};

  auto wait = opts_.backoff;
  for (int attempt = 0;; ++attempt) {
    bool retryable = false;
    try {
      return post_once(body, retryable);
    } catch (const ServiceError& e) {
      if (!retryable || attempt >= opts_.max_retries) {
        throw ServiceError(std::string(e.what()) + " (after " + std::to_string(attempt + 1) + " attempt" +
                           (attempt ? "s" : "") + ")");
      }
    }
    std::this_thread::sleep_for(wait);
    wait *= 2;
  }
}

OcrMetrics mllm_ocr_metrics(const DocumentImage& dewarped, const DocumentImage& flat, OcrClient& client) {
  OcrMetrics m;
  std::string hyp, ref;
  try {
    hyp = client.transcribe(dewarped);
    ref = client.transcribe(flat);
  } catch (const ServiceError& e) {
    m.error = e.what();
    return m;
  }
  m.mmed = static_cast<double>(edit_distance(hyp, ref));
  if (decode_utf8(ref).empty()) {
    m.error = "reference transcript is empty; mmcer undefined";
  } else {
    m.mmcer = char_error_rate(hyp, ref);
  }
  return m;
}

}  // namespace dvd
