#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kestrel/model.hpp"

namespace kestrel {

/// Thresholds, loop limits and ablation switches.
struct GateConfig {
  int max_rounds = 3;
  int stable_supported_rounds = 2;
  double ground_conf = 0.5;
  double ground_recheck_conf = 0.35;
  std::map<ClaimType, double> gate_threshold = {{ClaimType::Existence, 0.82},
                                                {ClaimType::Count, 0.85},
                                                {ClaimType::Color, 0.87},
                                                {ClaimType::Position, 0.90}};
  bool require_citations_for_flip = true;
  bool enable_yes_guard = true;

  // Ablation switches, one per component of the loop.
  bool use_grounding = true;
  std::map<ClaimType, bool> use_textual_evidence = {{ClaimType::Existence, true},
                                                    {ClaimType::Count, true},
                                                    {ClaimType::Color, true},
                                                    {ClaimType::Position, true}};
  bool use_claim_verification = true;
  bool use_gating = true;
  bool use_self_refinement = true;
  bool use_history = true;

  double gate_for(ClaimType t) const;
  bool textual_enabled(ClaimType t) const;
  bool any_textual_enabled() const;

  friend bool operator==(const GateConfig&, const GateConfig&) = default;
};

struct GroundingOptions {
  int max_instances = 16;
  double crop_margin = 0.15;
  int crop_min_side = 224;
  bool use_seg_overlay = true;
  bool use_bbox_render = true;
  bool use_crop_zoom = true;
  bool send_image_as_path = false;

  friend bool operator==(const GroundingOptions&, const GroundingOptions&) = default;
};

struct LoopOptions {
  /// More than one claim per round; off by default (one claim per round).
  bool multi_claim = false;
  int max_claims_per_round = 1;
  /// Adds crop-and-zoom and LVLM count evidence after a non-supported round.
  bool evidence_escalation = true;
  bool use_count_vision = true;
  int init_attempts = 2;

  friend bool operator==(const LoopOptions&, const LoopOptions&) = default;
};

struct EndpointBinding {
  std::string endpoint;  // URL, or "synthetic"
  std::string model;

  friend bool operator==(const EndpointBinding&, const EndpointBinding&) = default;
};

struct BackendOptions {
  EndpointBinding initializer{"synthetic", ""};
  EndpointBinding judge{"synthetic", ""};
  EndpointBinding refiner{"synthetic", ""};
  EndpointBinding color_observer{"synthetic", ""};
  EndpointBinding grounder{"synthetic", ""};
  std::string chat_path = "/v1/chat/completions";
  std::string segment_path = "/v1/segment";
  int timeout_ms = 60000;
  int max_retries = 3;
  int backoff_ms = 200;
  int max_in_flight = 8;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string image_part_style = "image_url";  // or "image"
  std::string api_key_env = "KESTREL_API_KEY";

  friend bool operator==(const BackendOptions&, const BackendOptions&) = default;
};

struct RunOptions {
  int workers = 4;
  unsigned long long seed = 0;
  bool record = true;
  std::string templates_dir;

  friend bool operator==(const RunOptions&, const RunOptions&) = default;
};

/// Knobs of the synthetic-scene rig.
struct SyntheticOptions {
  std::string difficulty = "random";
  int canvas_width = 320;
  int canvas_height = 240;
  double init_wrong_rate = 0.5;
  std::string judge_mode = "oracle";  // oracle | always_supported | always_insufficient
  double judge_noise = 0.0;
  double judge_noise_conf_min = 0.5;
  double judge_noise_conf_max = 0.8;
  double miss_rate = 0.0;
  double hallucinate_rate = 0.0;
  double score_jitter = 0.0;

  friend bool operator==(const SyntheticOptions&, const SyntheticOptions&) = default;
};

struct EngineConfig {
  GateConfig gate;
  GroundingOptions grounding;
  LoopOptions loop;
  BackendOptions backends;
  RunOptions run;
  SyntheticOptions synthetic;
  std::vector<std::string> extra_stop_words;

  Lexicon lexicon() const;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

struct ConfigDiagnostic {
  std::string field;  // "section.key", or "line N" for syntax errors
  std::string message;
};

/// Parses the config file format: "[section]" headers, "key = value" lines,
/// '#' comments; values are quoted strings, numbers or true/false. Keys not
/// present keep their defaults.
struct ConfigParseResult {
  EngineConfig config;
  std::vector<ConfigDiagnostic> diagnostics;
  bool ok() const noexcept { return diagnostics.empty(); }
};

ConfigParseResult parse_config(std::string_view text, EngineConfig base = {});
ConfigParseResult load_config_file(const std::string& path);

/// Every key, every section, in canonical order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const EngineConfig& config);

/// Sets one dotted key ("gate.position", "ablation.use_grounding", ...).
/// Values use the same syntax as the file; bare words are accepted for strings
/// and on/off for booleans.
std::optional<ConfigDiagnostic> set_config_value(EngineConfig& config, std::string_view key,
                                                 std::string_view value);

/// Applies KESTREL_<SECTION>__<KEY> environment variables.
std::vector<ConfigDiagnostic> apply_env_overrides(EngineConfig& config, const char* const* envp);

/// Range and consistency checks.
std::vector<ConfigDiagnostic> validate_config(const EngineConfig& config);

/// All recognized dotted keys.
std::vector<std::string> config_keys();

std::string config_hash(const EngineConfig& config);

}  // namespace kestrel
