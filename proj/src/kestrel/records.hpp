#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/image.hpp"
#include "kestrel/model.hpp"

namespace kestrel {

/// Decoded raster plus its content hash, computed once.
struct ImageData {
  ImagePtr image;
  std::string hash;

  static ImageData of(ImagePtr image);
  static ImageData of(Image image) { return of(std::make_shared<const Image>(std::move(image))); }
  explicit operator bool() const noexcept { return image != nullptr; }
};

enum class EvidenceType {
  SegOverlay,
  CropZoom,
  CountText,
  CountCompareText,
  CountVisionText,
  CountVisionCompareText,
  ColorText,
  PositionText,
  PositionRelationText,
  ExistenceText,
};

std::string_view to_string(EvidenceType t) noexcept;
std::optional<EvidenceType> parse_evidence_type(std::string_view s);
bool is_image_evidence(EvidenceType t) noexcept;

struct EvidenceItem {
  std::string id;
  EvidenceType etype = EvidenceType::ExistenceText;
  std::string text;   // text payload, or a caption for image evidence
  ImageData image;    // image evidence only
  std::string image_hash;  // survives trace round-trips when image is not loaded
  std::string target;      // TargetKey string, when target-scoped
  std::string claim_id;    // position_relation_text only
  int round = 0;
};

enum class CheckStatus { Supported, Contradicted, Insufficient };

std::string_view to_string(CheckStatus s) noexcept;
std::optional<CheckStatus> parse_check_status(std::string_view s);

struct ClaimCheck {
  std::string claim_id;
  CheckStatus status = CheckStatus::Insufficient;
  double confidence = 0.0;
  std::string why;
  std::vector<std::string> citations;
  /// Status as judged, before citation validation downgraded it.
  CheckStatus original_status = CheckStatus::Insufficient;
  std::vector<std::string> stripped_citations;
  /// Filled in because the judge did not return a check for this claim.
  bool synthesized = false;

  friend bool operator==(const ClaimCheck&, const ClaimCheck&) = default;
};

struct VerificationReport {
  CheckStatus verdict = CheckStatus::Insufficient;
  /// The judge's own top-level verdict; recorded, never used for decisions.
  std::optional<CheckStatus> advisory_verdict;
  std::vector<ClaimCheck> checked;
  int round = 0;
  bool repaired = false;
  /// Verification switched off or the judge output could not be parsed.
  bool skipped = false;
  std::string parse_error;

  friend bool operator==(const VerificationReport&, const VerificationReport&) = default;
};

enum class GuardAnswer { Yes, No, Unclear };
enum class GuardConfidence { High, Medium, Low };

std::string_view to_string(GuardAnswer a) noexcept;
std::string_view to_string(GuardConfidence c) noexcept;

struct YesGuardResult {
  GuardAnswer answer = GuardAnswer::Unclear;
  GuardConfidence confidence = GuardConfidence::Low;
  std::string reason;

  friend bool operator==(const YesGuardResult&, const YesGuardResult&) = default;
};

struct InitResult {
  BinaryAnswer answer = BinaryAnswer::No;
  std::vector<Claim> claims;

  friend bool operator==(const InitResult&, const InitResult&) = default;
};

struct RefineResult {
  BinaryAnswer answer = BinaryAnswer::No;
  std::vector<Claim> new_claims;

  friend bool operator==(const RefineResult&, const RefineResult&) = default;
};

enum class GateDecision { KeptNoTrigger, KeptBelowGate, KeptNoCitation, Flipped, KeptSupported };
enum class StopReason { StableSupported, MaxRounds, NoStrongerEvidence, EarlyError };

std::string_view to_string(GateDecision d) noexcept;
std::optional<GateDecision> parse_gate_decision(std::string_view s);
std::string_view to_string(StopReason r) noexcept;
std::optional<StopReason> parse_stop_reason(std::string_view s);

/// Per-target grounding outcome as stored in the trace.
struct GroundingSummary {
  std::string target;  // raw phrase sent as concept prompt
  std::string tkey;
  std::vector<double> scores;  // kept instances, descending
  std::vector<std::array<int, 4>> boxes;
  double threshold_used = 0.0;
  bool rechecked = false;
  bool cached = false;
  /// Instances reported by the backend before filtering (score list).
  std::vector<double> raw_scores;

  friend bool operator==(const GroundingSummary&, const GroundingSummary&) = default;
};

struct RoundRecord {
  int round = 0;
  std::vector<Claim> claims;
  std::vector<GroundingSummary> grounding;
  std::vector<EvidenceItem> evidence;  // this round's slice, registry order
  std::vector<std::string> new_evidence_ids;  // first registered in this round
  VerificationReport report;
  std::optional<BinaryAnswer> proposed_answer;
  bool refine_repaired = false;
  std::string refine_error;
  BinaryAnswer answer_before = BinaryAnswer::No;
  BinaryAnswer answer_after = BinaryAnswer::No;
  GateDecision gate_decision = GateDecision::KeptNoTrigger;
  /// Claim ids and citations of the checks that licensed a flip.
  std::vector<std::string> trigger_claims;
  std::vector<std::string> trigger_citations;
  std::vector<std::string> flags;
  std::map<std::string, long long> latency_ms;

  std::vector<std::string> evidence_ids() const;
};

struct TraceEvent {
  std::string stage;
  std::string kind;  // e.g. "retry", "repair", "citation_stripped", "cache_miss", "error"
  std::string detail;

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

inline constexpr int kTraceSchemaVersion = 1;

struct RunTrace {
  int schema_version = kTraceSchemaVersion;
  std::string sample_id;
  std::string question;
  std::string image;  // description: path or content hash
  std::map<std::string, std::string> meta;
  ClaimType expected_type = ClaimType::Existence;
  BinaryAnswer initial_answer = BinaryAnswer::No;
  std::vector<Claim> initial_claims;
  std::optional<YesGuardResult> yes_guard;
  std::vector<std::string> flags;  // fallback_init, low_trust_initial, ...
  std::vector<RoundRecord> rounds;
  BinaryAnswer final_answer = BinaryAnswer::No;
  std::optional<StopReason> stop_reason;
  std::string error_stage;
  std::string error;
  std::vector<TraceEvent> events;
  std::map<std::string, long long> latency_ms;  // init-stage timings
  long long total_latency_ms = 0;

  bool has_flag(std::string_view f) const;
};

// JSON forms used by traces, prompts and fixtures.
nlohmann::json to_json(const Claim& c);
Claim claim_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvidenceItem& e);
EvidenceItem evidence_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClaimCheck& c);
ClaimCheck check_from_json(const nlohmann::json& j);
nlohmann::json to_json(const VerificationReport& r);
VerificationReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const YesGuardResult& y);
nlohmann::json to_json(const GroundingSummary& g);
nlohmann::json to_json(const RoundRecord& r);
RoundRecord round_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunTrace& t);
/// Throws Error(ParseFailure) on malformed records.
RunTrace trace_from_json(const nlohmann::json& j);

/// Same record with every latency field zeroed.
RunTrace without_timing(RunTrace t);

}  // namespace kestrel
