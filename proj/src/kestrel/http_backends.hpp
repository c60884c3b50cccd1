#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "kestrel/backends.hpp"
#include "kestrel/config.hpp"

namespace kestrel {

struct HttpOptions {
  std::string path;  // appended to any path prefix of the endpoint URL
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_ms = 200;
  int max_in_flight = 8;
  std::string image_part_style = "image_url";
  std::string bearer_token;  // empty: no Authorization header
};

/// Resolves the bearer token from the environment variable named in `options`.
HttpOptions http_options(const BackendOptions& options, std::string path);

/// Called once per attempt with the exact bytes sent and received. `status`
/// is 0 when no response arrived.
using ExchangeHook = std::function<void(std::string_view request_body, int status, std::string_view response_body)>;

/// Chat completion request body. Images go as PNG data URLs, either as
/// {"type":"image_url","image_url":{"url":...}} or {"type":"image","image":...}.
nlohmann::json chat_request_body(const ChatRequest& request, std::string_view image_part_style);

/// Reply text from choices[0].message.content (string or list of text parts),
/// falling back to choices[0].text. Throws Error(MalformedResponse).
ChatResponse parse_chat_reply(const nlohmann::json& body);

/// OpenAI-compatible chat client. Connection errors, timeouts, 5xx and 429 are
/// retried with exponential backoff; other statuses fail at once.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::string endpoint, HttpOptions options);
  ~HttpChatBackend() override;

  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override;
  void set_exchange_hook(ExchangeHook hook);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Client for the segmentation service (POST {image, concept, max_instances, min_score}).
class HttpSegmentationBackend : public SegmentationBackend {
 public:
  HttpSegmentationBackend(std::string endpoint, HttpOptions options, bool send_image_as_path = false);
  ~HttpSegmentationBackend() override;

  SegmentResponse segment(const SegmentRequest& request) override;
  std::string describe() const override;
  void set_exchange_hook(ExchangeHook hook);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace kestrel
