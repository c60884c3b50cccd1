#include "kestrel/http_backends.hpp"

#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "kestrel/error.hpp"
#include "kestrel/hashing.hpp"

namespace kestrel {

using nlohmann::json;

HttpOptions http_options(const BackendOptions& options, std::string path) {
  HttpOptions o;
  o.path = std::move(path);
  o.timeout_ms = options.timeout_ms;
  o.max_retries = options.max_retries;
  o.backoff_ms = options.backoff_ms;
  o.max_in_flight = options.max_in_flight;
  o.image_part_style = options.image_part_style;
  if (!options.api_key_env.empty()) {
    if (const char* token = std::getenv(options.api_key_env.c_str())) o.bearer_token = token;
  }
  return o;
}

namespace {

std::string data_url(const ImageData& image) {
  if (!image) throw Error(ErrorCode::InvalidArgument, "image part without image");
  return "data:image/png;base64," + base64_encode(encode_png(*image.image));
}

/// Shared POST-with-retries machinery for both clients.
class Transport {
 public:
  Transport(std::string endpoint, HttpOptions options)
      : endpoint_(std::move(endpoint)), options_(std::move(options)),
        slots_(std::max(1, options_.max_in_flight)) {
    auto scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "endpoint must be an http(s) URL: " + endpoint_);
    }
    auto path_start = endpoint_.find('/', scheme_end + 3);
    base_ = endpoint_.substr(0, path_start);
    if (path_start != std::string::npos) {
      prefix_ = endpoint_.substr(path_start);
      while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
  }

  const std::string& endpoint() const { return endpoint_; }

  void set_hook(ExchangeHook hook) {
    std::lock_guard lock(hook_mu_);
    hook_ = std::move(hook);
  }

  struct Reply {
    std::string body;
    long long latency_ms = 0;
    std::vector<std::string> events;
  };

  Reply post(const std::string& body) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const auto start = std::chrono::steady_clock::now();
    const auto path = prefix_ + options_.path;
    Reply reply;
    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
      if (attempt > 0) {
        reply.events.push_back("retry " + std::to_string(attempt) + ": " + last_error);
        std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_ms) * (1LL << (attempt - 1)));
      }
      httplib::Client client(base_);
      const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      if (!options_.bearer_token.empty()) client.set_bearer_token_auth(options_.bearer_token);

      auto result = client.Post(path, body, "application/json");
      notify(body, result ? result->status : 0, result ? result->body : std::string());
      if (!result) {
        last_error = httplib::to_string(result.error());
        continue;
      }
      const int status = result->status;
      if (status == 200) {
        reply.body = std::move(result->body);
        reply.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - start).count();
        return reply;
      }
      last_error = "HTTP " + std::to_string(status);
      if (status == 429 || status >= 500) continue;
      throw Error(ErrorCode::BackendUnavailable, endpoint_ + path + ": " + last_error + " " + result->body.substr(0, 200));
    }
    throw Error(ErrorCode::BackendUnavailable, endpoint_ + path + ": " + last_error + " after " +
                                                   std::to_string(options_.max_retries) + " retries");
  }

  const HttpOptions& options() const { return options_; }

 private:
  void notify(std::string_view request, int status, std::string_view response) {
    std::lock_guard lock(hook_mu_);
    if (hook_) hook_(request, status, response);
  }

  std::string endpoint_;
  HttpOptions options_;
  std::string base_;
  std::string prefix_;
  std::counting_semaphore<> slots_;
  std::mutex hook_mu_;
  ExchangeHook hook_;
};

}  // namespace

json chat_request_body(const ChatRequest& request, std::string_view image_part_style) {
  json content = json::array();
  for (const auto& p : request.parts) {
    if (p.kind == ContentPart::Kind::Text) {
      content.push_back({{"type", "text"}, {"text", p.text}});
    } else if (image_part_style == "image") {
      content.push_back({{"type", "image"}, {"image", data_url(p.image)}});
    } else {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url(p.image)}}}});
    }
  }
  json body = {{"model", request.model},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens},
               {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  return body;
}

ChatResponse parse_chat_reply(const json& body) {
  auto bad = [](const std::string& what) { return Error(ErrorCode::MalformedResponse, "chat reply: " + what); };
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw bad("missing choices");
  }
  const auto& choice = body["choices"][0];
  ChatResponse out;
  bool found = false;
  if (choice.contains("message") && choice["message"].is_object() && choice["message"].contains("content")) {
    const auto& content = choice["message"]["content"];
    if (content.is_string()) {
      out.text = content.get<std::string>();
      found = true;
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.is_object() && part.value("type", "") == "text" && part.contains("text") && part["text"].is_string()) {
          out.text += part["text"].get<std::string>();
          found = true;
        }
      }
    }
  }
  if (!found && choice.contains("text") && choice["text"].is_string()) {
    out.text = choice["text"].get<std::string>();
    found = true;
  }
  if (!found) throw bad("no text in choices[0]");
  if (body.contains("usage") && body["usage"].is_object()) {
    const auto& u = body["usage"];
    if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number_integer()) out.prompt_tokens = u["prompt_tokens"];
    if (u.contains("completion_tokens") && u["completion_tokens"].is_number_integer()) {
      out.completion_tokens = u["completion_tokens"];
    }
  }
  return out;
}

struct HttpChatBackend::Impl {
  Impl(std::string endpoint, HttpOptions options) : transport(std::move(endpoint), std::move(options)) {}
  Transport transport;
};

HttpChatBackend::HttpChatBackend(std::string endpoint, HttpOptions options)
    : impl_(std::make_unique<Impl>(std::move(endpoint), std::move(options))) {}

HttpChatBackend::~HttpChatBackend() = default;

ChatResponse HttpChatBackend::chat(const ChatRequest& request) {
  const auto body = chat_request_body(request, impl_->transport.options().image_part_style).dump();
  auto reply = impl_->transport.post(body);
  auto parsed = json::parse(reply.body, nullptr, false);
  if (parsed.is_discarded()) throw Error(ErrorCode::MalformedResponse, "chat reply is not JSON");
  auto out = parse_chat_reply(parsed);
  out.latency_ms = reply.latency_ms;
  out.events = std::move(reply.events);
  return out;
}

std::string HttpChatBackend::describe() const { return impl_->transport.endpoint(); }

void HttpChatBackend::set_exchange_hook(ExchangeHook hook) { impl_->transport.set_hook(std::move(hook)); }

struct HttpSegmentationBackend::Impl {
  Impl(std::string endpoint, HttpOptions options, bool path)
      : transport(std::move(endpoint), std::move(options)), send_path(path) {}
  Transport transport;
  bool send_path;
};

HttpSegmentationBackend::HttpSegmentationBackend(std::string endpoint, HttpOptions options, bool send_image_as_path)
    : impl_(std::make_unique<Impl>(std::move(endpoint), std::move(options), send_image_as_path)) {}

HttpSegmentationBackend::~HttpSegmentationBackend() = default;

SegmentResponse HttpSegmentationBackend::segment(const SegmentRequest& request) {
  if (!request.image) throw Error(ErrorCode::InvalidArgument, "segment request without image");
  const auto body = segment_request_json(request, impl_->send_path).dump();
  auto reply = impl_->transport.post(body);
  auto parsed = json::parse(reply.body, nullptr, false);
  if (parsed.is_discarded()) throw Error(ErrorCode::MalformedResponse, "segment reply is not JSON");
  auto out = parse_segment_response(parsed, request.image.image->width(), request.image.image->height());
  out.latency_ms = reply.latency_ms;
  out.events = std::move(reply.events);
  return out;
}

std::string HttpSegmentationBackend::describe() const { return impl_->transport.endpoint(); }

void HttpSegmentationBackend::set_exchange_hook(ExchangeHook hook) { impl_->transport.set_hook(std::move(hook)); }

}  // namespace kestrel
