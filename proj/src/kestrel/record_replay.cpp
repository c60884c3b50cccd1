#include "kestrel/record_replay.hpp"

#include <fstream>

#include "kestrel/error.hpp"

namespace kestrel {

using nlohmann::json;

std::string ResponseStore::key(const std::string& sample_id, const std::string& role, const std::string& hash) {
  return sample_id + "|" + role + "|" + hash;
}

void ResponseStore::put(RecordedResponse r) {
  std::lock_guard lock(mu_);
  auto k = key(r.sample_id, r.role, r.hash);
  items_[k].push_back(std::move(r));
  ++count_;
}

const std::vector<RecordedResponse>* ResponseStore::find(const std::string& sample_id, const std::string& role,
                                                         const std::string& hash) const {
  std::lock_guard lock(mu_);
  auto it = items_.find(key(sample_id, role, hash));
  return it == items_.end() ? nullptr : &it->second;
}

std::size_t ResponseStore::size() const {
  std::lock_guard lock(mu_);
  return count_;
}

std::vector<RecordedResponse> ResponseStore::entries() const {
  std::lock_guard lock(mu_);
  std::vector<RecordedResponse> out;
  out.reserve(count_);
  for (const auto& [k, list] : items_) out.insert(out.end(), list.begin(), list.end());
  return out;
}

void ResponseStore::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& r : entries()) {
    json line = {{"sample_id", r.sample_id},
                 {"role", r.role},
                 {"hash", r.hash},
                 {"purpose", r.purpose},
                 {"response", r.response}};
    out << line.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::shared_ptr<ResponseStore> ResponseStore::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  auto store = std::make_shared<ResponseStore>();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("sample_id") || !j.contains("role") ||
        !j.contains("hash") || !j.contains("response")) {
      throw Error(ErrorCode::ParseFailure, path.string() + ":" + std::to_string(lineno) + ": bad record");
    }
    store->put({j["sample_id"].get<std::string>(), j["role"].get<std::string>(), j["hash"].get<std::string>(),
                j.value("purpose", ""), j["response"]});
  }
  return store;
}

namespace {

json chat_response_json(const ChatResponse& r) {
  return {{"text", r.text}, {"prompt_tokens", r.prompt_tokens}, {"completion_tokens", r.completion_tokens}};
}

const RecordedResponse& serve(const ResponseStore& store, std::mutex& mu, std::map<std::string, std::size_t>& cursor,
                              const std::string& sample_id, const std::string& role, const std::string& hash,
                              const std::string& purpose) {
  const auto* list = store.find(sample_id, role, hash);
  if (list == nullptr || list->empty()) {
    throw Error(ErrorCode::CacheMiss, "no recorded " + role + " response for sample '" + sample_id + "' request " +
                                          hash.substr(0, 16) + (purpose.empty() ? "" : " (" + purpose + ")"));
  }
  std::lock_guard lock(mu);
  auto& next = cursor[hash];
  const auto& r = (*list)[std::min(next, list->size() - 1)];
  ++next;
  return r;
}

}  // namespace

RecordingChatBackend::RecordingChatBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ResponseStore> store,
                                           Role role, std::string sample_id)
    : inner_(std::move(inner)), store_(std::move(store)), role_(role), sample_id_(std::move(sample_id)) {}

ChatResponse RecordingChatBackend::chat(const ChatRequest& request) {
  auto response = inner_->chat(request);
  store_->put({sample_id_, std::string(to_string(role_)), request_hash(request), request.purpose,
               chat_response_json(response)});
  return response;
}

std::string RecordingChatBackend::describe() const { return "recording(" + inner_->describe() + ")"; }

ReplayChatBackend::ReplayChatBackend(std::shared_ptr<const ResponseStore> store, Role role, std::string sample_id)
    : store_(std::move(store)), role_(role), sample_id_(std::move(sample_id)) {}

ChatResponse ReplayChatBackend::chat(const ChatRequest& request) {
  const auto& r = serve(*store_, mu_, cursor_, sample_id_, std::string(to_string(role_)), request_hash(request),
                        request.purpose);
  ChatResponse out;
  out.text = r.response.value("text", "");
  out.prompt_tokens = r.response.value("prompt_tokens", 0);
  out.completion_tokens = r.response.value("completion_tokens", 0);
  return out;
}

RecordingSegmentationBackend::RecordingSegmentationBackend(std::shared_ptr<SegmentationBackend> inner,
                                                           std::shared_ptr<ResponseStore> store, std::string sample_id)
    : inner_(std::move(inner)), store_(std::move(store)), sample_id_(std::move(sample_id)) {}

SegmentResponse RecordingSegmentationBackend::segment(const SegmentRequest& request) {
  auto response = inner_->segment(request);
  store_->put({sample_id_, std::string(to_string(Role::Grounder)), request_hash(request), request.concept_text,
               segment_response_json(response)});
  return response;
}

std::string RecordingSegmentationBackend::describe() const { return "recording(" + inner_->describe() + ")"; }

ReplaySegmentationBackend::ReplaySegmentationBackend(std::shared_ptr<const ResponseStore> store, std::string sample_id)
    : store_(std::move(store)), sample_id_(std::move(sample_id)) {}

SegmentResponse ReplaySegmentationBackend::segment(const SegmentRequest& request) {
  if (!request.image) throw Error(ErrorCode::InvalidArgument, "segment request without image");
  const auto& r = serve(*store_, mu_, cursor_, sample_id_, std::string(to_string(Role::Grounder)),
                        request_hash(request), request.concept_text);
  return parse_segment_response(r.response, request.image.image->width(), request.image.image->height());
}

BackendSet recording_backends(const BackendSet& live, std::shared_ptr<ResponseStore> store,
                              const std::string& sample_id) {
  auto wrap = [&](const std::shared_ptr<ChatBackend>& b, Role role) -> std::shared_ptr<ChatBackend> {
    if (!b) return nullptr;
    return std::make_shared<RecordingChatBackend>(b, store, role, sample_id);
  };
  BackendSet out;
  out.initializer = wrap(live.initializer, Role::Initializer);
  out.judge = wrap(live.judge, Role::Judge);
  out.refiner = wrap(live.refiner, Role::Refiner);
  out.color_observer = wrap(live.color_observer, Role::ColorObserver);
  if (live.grounder) out.grounder = std::make_shared<RecordingSegmentationBackend>(live.grounder, store, sample_id);
  return out;
}

BackendSet replay_backends(std::shared_ptr<const ResponseStore> store, const std::string& sample_id,
                           bool with_observer) {
  BackendSet out;
  out.initializer = std::make_shared<ReplayChatBackend>(store, Role::Initializer, sample_id);
  out.judge = std::make_shared<ReplayChatBackend>(store, Role::Judge, sample_id);
  out.refiner = std::make_shared<ReplayChatBackend>(store, Role::Refiner, sample_id);
  if (with_observer) out.color_observer = std::make_shared<ReplayChatBackend>(store, Role::ColorObserver, sample_id);
  out.grounder = std::make_shared<ReplaySegmentationBackend>(store, sample_id);
  return out;
}

}  // namespace kestrel
