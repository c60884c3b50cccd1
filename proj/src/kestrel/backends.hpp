#pragma once

#include <array>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/geometry.hpp"
#include "kestrel/mask.hpp"
#include "kestrel/prompt.hpp"

namespace kestrel {

enum class Role { Initializer, Judge, Refiner, ColorObserver, Grounder };

inline constexpr std::array<Role, 5> kAllRoles = {Role::Initializer, Role::Judge, Role::Refiner,
                                                  Role::ColorObserver, Role::Grounder};

std::string_view to_string(Role r) noexcept;
std::optional<Role> parse_role(std::string_view s);

struct ChatRequest {
  /// Template name of the prompt; telemetry only, not part of the request hash.
  std::string purpose;
  std::string model;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::vector<ContentPart> parts;  // a single user turn

  static ChatRequest from_bundle(const PromptBundle& bundle, std::string model = {}, double temperature = 0.0,
                                 int max_tokens = 1024);
  /// Text parts joined with newlines.
  std::string text() const;
};

struct ChatResponse {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  long long latency_ms = 0;
  /// Transport events such as retries, in order.
  std::vector<std::string> events;
};

/// Canonical JSON form: images by content hash, keys sorted. Equal for
/// semantically identical requests.
nlohmann::json canonical_json(const ChatRequest& request);
std::string request_hash(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Throws Error(BackendUnavailable) or Error(MalformedResponse).
  virtual ChatResponse chat(const ChatRequest& request) = 0;
  virtual std::string describe() const = 0;
};

struct SegmentRequest {
  ImageData image;
  /// Sent instead of image bytes when set and path mode is enabled.
  std::string image_path;
  std::string concept_text;
  int max_instances = 16;
  double min_score = 0.0;
};

nlohmann::json canonical_json(const SegmentRequest& request);
std::string request_hash(const SegmentRequest& request);

struct SegInstance {
  double score = 0.0;
  BBox bbox;  // as reported
  Mask mask;  // full image frame
};

struct SegmentResponse {
  std::vector<SegInstance> instances;
  std::string model;
  long long latency_ms = 0;
  std::vector<std::string> events;
};

/// Wire body -> response. Throws Error(MalformedResponse) on contract
/// violations: bad score, bbox outside the image, undecodable or empty mask.
SegmentResponse parse_segment_response(const nlohmann::json& body, int width, int height);
/// Response -> wire body (masks as RLE).
nlohmann::json segment_response_json(const SegmentResponse& response);
/// Request wire body; the image goes as base64 PNG unless `use_path` and a path is set.
nlohmann::json segment_request_json(const SegmentRequest& request, bool use_path);

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual SegmentResponse segment(const SegmentRequest& request) = 0;
  virtual std::string describe() const = 0;
};

/// Backends bound to the roles for one sample run. A null color_observer
/// disables LVLM color and count observations (fallbacks are used).
struct BackendSet {
  std::shared_ptr<ChatBackend> initializer;
  std::shared_ptr<ChatBackend> judge;
  std::shared_ptr<ChatBackend> refiner;
  std::shared_ptr<ChatBackend> color_observer;
  std::shared_ptr<SegmentationBackend> grounder;
};

// ---- test backends ----

/// Chat backend from a function.
class LambdaChatBackend : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit LambdaChatBackend(Fn fn, std::string name = "lambda") : fn_(std::move(fn)), name_(std::move(name)) {}
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

class LambdaSegmentationBackend : public SegmentationBackend {
 public:
  using Fn = std::function<SegmentResponse(const SegmentRequest&)>;
  explicit LambdaSegmentationBackend(Fn fn, std::string name = "lambda") : fn_(std::move(fn)), name_(std::move(name)) {}
  SegmentResponse segment(const SegmentRequest& request) override { return fn_(request); }
  std::string describe() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

/// Ordered fixture script. Each request must satisfy the next step's matcher;
/// otherwise Error(ScriptMismatch) naming the expected step. Running past the
/// end throws Error(ScriptExhausted).
class ScriptedChatBackend : public ChatBackend {
 public:
  struct Step {
    std::string description;
    std::function<bool(const ChatRequest&)> matches;
    std::string response;
  };

  explicit ScriptedChatBackend(std::vector<Step> steps) : steps_(std::move(steps)) {}
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override { return "scripted"; }
  std::size_t remaining() const;

  static Step expect_purpose(std::string purpose, std::string response);
  static Step expect_text(std::string needle, std::string response);
  static Step any(std::string response);

 private:
  mutable std::mutex mu_;
  std::vector<Step> steps_;
  std::size_t next_ = 0;
};

}  // namespace kestrel
