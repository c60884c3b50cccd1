#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/backends.hpp"

namespace kestrel {

/// One recorded response, keyed by sample, role and canonical request hash.
struct RecordedResponse {
  std::string sample_id;
  std::string role;
  std::string hash;
  std::string purpose;
  nlohmann::json response;
};

/// Append-only response cache shared by all workers of a run. Identical
/// requests within a sample are stored in call order and served back in the
/// same order; past the end the last response repeats.
class ResponseStore {
 public:
  void put(RecordedResponse r);
  /// Responses for the key in call order, or nullptr.
  const std::vector<RecordedResponse>* find(const std::string& sample_id, const std::string& role,
                                            const std::string& hash) const;
  std::size_t size() const;
  std::vector<RecordedResponse> entries() const;  // sorted by key, call order kept

  /// JSON Lines, one response per line, sorted by key.
  void save_jsonl(const std::filesystem::path& path) const;
  /// Throws Error(IoError) or Error(ParseFailure).
  static std::shared_ptr<ResponseStore> load_jsonl(const std::filesystem::path& path);

 private:
  static std::string key(const std::string& sample_id, const std::string& role, const std::string& hash);
  mutable std::mutex mu_;
  std::map<std::string, std::vector<RecordedResponse>> items_;
  std::size_t count_ = 0;
};

/// Wrappers are created per sample; they carry the sample id used in keys.
class RecordingChatBackend : public ChatBackend {
 public:
  RecordingChatBackend(std::shared_ptr<ChatBackend> inner, std::shared_ptr<ResponseStore> store, Role role,
                       std::string sample_id);
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override;

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::shared_ptr<ResponseStore> store_;
  Role role_;
  std::string sample_id_;
};

/// Serves recorded responses; throws Error(CacheMiss) naming the request.
class ReplayChatBackend : public ChatBackend {
 public:
  ReplayChatBackend(std::shared_ptr<const ResponseStore> store, Role role, std::string sample_id);
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override { return "replay"; }

 private:
  std::shared_ptr<const ResponseStore> store_;
  Role role_;
  std::string sample_id_;
  std::mutex mu_;
  std::map<std::string, std::size_t> cursor_;
};

class RecordingSegmentationBackend : public SegmentationBackend {
 public:
  RecordingSegmentationBackend(std::shared_ptr<SegmentationBackend> inner, std::shared_ptr<ResponseStore> store,
                               std::string sample_id);
  SegmentResponse segment(const SegmentRequest& request) override;
  std::string describe() const override;

 private:
  std::shared_ptr<SegmentationBackend> inner_;
  std::shared_ptr<ResponseStore> store_;
  std::string sample_id_;
};

class ReplaySegmentationBackend : public SegmentationBackend {
 public:
  ReplaySegmentationBackend(std::shared_ptr<const ResponseStore> store, std::string sample_id);
  SegmentResponse segment(const SegmentRequest& request) override;
  std::string describe() const override { return "replay"; }

 private:
  std::shared_ptr<const ResponseStore> store_;
  std::string sample_id_;
  std::mutex mu_;
  std::map<std::string, std::size_t> cursor_;
};

/// Wraps every role of `live` for recording under `sample_id`.
BackendSet recording_backends(const BackendSet& live, std::shared_ptr<ResponseStore> store,
                              const std::string& sample_id);
/// Replay set for one sample; the color observer is bound only if `with_observer`.
BackendSet replay_backends(std::shared_ptr<const ResponseStore> store, const std::string& sample_id,
                           bool with_observer = true);

}  // namespace kestrel
