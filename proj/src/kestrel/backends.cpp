#include "kestrel/backends.hpp"

#include "kestrel/error.hpp"
#include "kestrel/hashing.hpp"

namespace kestrel {

using nlohmann::json;

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::Initializer: return "initializer";
    case Role::Judge: return "judge";
    case Role::Refiner: return "refiner";
    case Role::ColorObserver: return "color_observer";
    case Role::Grounder: return "grounder";
  }
  return "initializer";
}

std::optional<Role> parse_role(std::string_view s) {
  for (auto r : kAllRoles) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

ChatRequest ChatRequest::from_bundle(const PromptBundle& bundle, std::string model, double temperature,
                                     int max_tokens) {
  ChatRequest r;
  r.purpose = std::string(to_string(bundle.template_id));
  r.model = std::move(model);
  r.temperature = temperature;
  r.max_tokens = max_tokens;
  r.parts = bundle.parts;
  return r;
}

std::string ChatRequest::text() const {
  std::string out;
  for (const auto& p : parts) {
    if (p.kind != ContentPart::Kind::Text) continue;
    if (!out.empty()) out += '\n';
    out += p.text;
  }
  return out;
}

json canonical_json(const ChatRequest& request) {
  json content = json::array();
  for (const auto& p : request.parts) {
    if (p.kind == ContentPart::Kind::Text) {
      content.push_back({{"type", "text"}, {"text", p.text}});
    } else {
      content.push_back({{"type", "image"}, {"sha256", p.image.hash}});
    }
  }
  return {{"model", request.model},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens},
          {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
}

std::string request_hash(const ChatRequest& request) { return sha256_hex(canonical_json(request).dump()); }

json canonical_json(const SegmentRequest& request) {
  return {{"image", request.image.hash},
          {"concept", request.concept_text},
          {"max_instances", request.max_instances},
          {"min_score", request.min_score}};
}

std::string request_hash(const SegmentRequest& request) { return sha256_hex(canonical_json(request).dump()); }

SegmentResponse parse_segment_response(const json& body, int width, int height) {
  auto bad = [](const std::string& what) { return Error(ErrorCode::MalformedResponse, "segment response: " + what); };
  if (!body.is_object() || !body.contains("instances") || !body["instances"].is_array()) {
    throw bad("expected {\"instances\": [...]}");
  }
  SegmentResponse out;
  if (body.contains("model") && body["model"].is_string()) out.model = body["model"].get<std::string>();
  const auto& instances = body["instances"];
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto where = "instance " + std::to_string(i) + ": ";
    if (!inst.is_object()) throw bad(where + "must be an object");
    if (!inst.contains("score") || !inst["score"].is_number()) throw bad(where + "score must be a number");
    SegInstance s;
    s.score = inst["score"].get<double>();
    if (!(s.score >= 0.0 && s.score <= 1.0)) throw bad(where + "score outside [0,1]");
    const auto& box = inst.value("bbox", json());
    if (!box.is_array() || box.size() != 4 ||
        !std::all_of(box.begin(), box.end(), [](const json& v) { return v.is_number_integer(); })) {
      throw bad(where + "bbox must be [x0,y0,x1,y1] integers");
    }
    s.bbox = {box[0].get<int>(), box[1].get<int>(), box[2].get<int>(), box[3].get<int>()};
    if (!s.bbox.within(width, height)) throw bad(where + "bbox outside the image or empty");
    if (!inst.contains("mask")) throw bad(where + "mask missing");
    s.mask = decode_wire_mask(inst["mask"], width, height);
    if (s.mask.area() == 0) throw bad(where + "mask is empty");
    out.instances.push_back(std::move(s));
  }
  return out;
}

json segment_response_json(const SegmentResponse& response) {
  json instances = json::array();
  for (const auto& s : response.instances) {
    instances.push_back({{"score", s.score},
                         {"bbox", {s.bbox.x0, s.bbox.y0, s.bbox.x1, s.bbox.y1}},
                         {"mask", {{"format", "rle"}, {"data", encode_rle(s.mask)}}}});
  }
  return {{"instances", instances}, {"model", response.model}};
}

json segment_request_json(const SegmentRequest& request, bool use_path) {
  json body = {{"concept", request.concept_text},
               {"max_instances", request.max_instances},
               {"min_score", request.min_score}};
  if (use_path && !request.image_path.empty()) {
    body["image"] = request.image_path;
  } else {
    if (!request.image) throw Error(ErrorCode::InvalidArgument, "segment request without image");
    body["image"] = base64_encode(encode_png(*request.image.image));
  }
  return body;
}

ChatResponse LambdaChatBackend::chat(const ChatRequest& request) {
  ChatResponse r;
  r.text = fn_(request);
  return r;
}

ChatResponse ScriptedChatBackend::chat(const ChatRequest& request) {
  std::lock_guard lock(mu_);
  if (next_ >= steps_.size()) {
    throw Error(ErrorCode::ScriptExhausted, "script exhausted after " + std::to_string(steps_.size()) +
                                                " step(s); unexpected '" + request.purpose + "' request");
  }
  const auto& step = steps_[next_];
  if (!step.matches(request)) {
    throw Error(ErrorCode::ScriptMismatch, "step " + std::to_string(next_ + 1) + " expected " + step.description +
                                               ", got '" + request.purpose + "' request");
  }
  ++next_;
  ChatResponse r;
  r.text = step.response;
  return r;
}

std::size_t ScriptedChatBackend::remaining() const {
  std::lock_guard lock(mu_);
  return steps_.size() - next_;
}

ScriptedChatBackend::Step ScriptedChatBackend::expect_purpose(std::string purpose, std::string response) {
  auto desc = "purpose '" + purpose + "'";
  return {std::move(desc), [p = std::move(purpose)](const ChatRequest& r) { return r.purpose == p; },
          std::move(response)};
}

ScriptedChatBackend::Step ScriptedChatBackend::expect_text(std::string needle, std::string response) {
  auto desc = "text containing '" + needle + "'";
  return {std::move(desc),
          [n = std::move(needle)](const ChatRequest& r) { return r.text().find(n) != std::string::npos; },
          std::move(response)};
}

ScriptedChatBackend::Step ScriptedChatBackend::any(std::string response) {
  return {"any request", [](const ChatRequest&) { return true; }, std::move(response)};
}

}  // namespace kestrel
