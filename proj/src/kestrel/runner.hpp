#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/backends.hpp"
#include "kestrel/config.hpp"
#include "kestrel/prompt.hpp"
#include "kestrel/record_replay.hpp"
#include "kestrel/records.hpp"
#include "kestrel/synthetic.hpp"
#include "kestrel/trace.hpp"

namespace kestrel {

inline constexpr const char* kVersion = "0.1.0";

using BackendFactory = std::function<BackendSet(const Sample&)>;

struct BatchOptions {
  int workers = 4;
  /// Receives finished traces in input order.
  TraceWriter* writer = nullptr;
  /// Wraps each sample's backends for recording when set.
  std::shared_ptr<ResponseStore> record;
};

/// Runs samples on up to `workers` threads. Results keep input order; a
/// sample whose backends cannot be built ends with an early_error trace.
std::vector<RunTrace> run_batch(const std::vector<Sample>& samples, const BackendFactory& factory,
                                const EngineConfig& config, const Templates& templates, const BatchOptions& options);

/// Backend for one configured role: an http(s) URL gives an HTTP client,
/// "none" gives null. Throws Error(InvalidConfig) for anything else
/// ("synthetic" needs a scene; see simulate).
std::shared_ptr<ChatBackend> chat_backend_for(const EngineConfig& config, Role role);
std::shared_ptr<SegmentationBackend> grounder_for(const EngineConfig& config);
BackendSet live_backends(const EngineConfig& config);

/// Bindings of a synthetic run: roles bound to "synthetic" answer from the
/// scene, the others are built as in live_backends.
BackendSet scene_backends(const EngineConfig& config, std::shared_ptr<const synthetic::SceneSpec> scene);

struct Simulation {
  std::vector<std::shared_ptr<const synthetic::SceneSpec>> scenes;
  std::vector<LabeledSample> samples;
};

/// Deterministic scenes and questions for a synthetic run (seeded by run.seed).
Simulation make_simulation(const EngineConfig& config, int scenes);

/// Runs a simulation with scene_backends per sample.
std::vector<RunTrace> run_simulation(const Simulation& sim, const EngineConfig& config, const Templates& templates,
                                     const BatchOptions& options);

/// Re-runs samples answering every backend call from recorded responses.
std::vector<RunTrace> replay_run(const std::vector<Sample>& samples, std::shared_ptr<const ResponseStore> store,
                                 const EngineConfig& config, const Templates& templates, const BatchOptions& options);

/// Everything needed to reproduce a run: config (text and hash), template
/// versions, role bindings and the command.
nlohmann::json run_manifest(const EngineConfig& config, const Templates& templates, const std::string& command,
                            std::size_t samples);

std::vector<Sample> unlabeled(const std::vector<LabeledSample>& samples);

}  // namespace kestrel
