#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kestrel/backends.hpp"
#include "kestrel/config.hpp"
#include "kestrel/grounding.hpp"
#include "kestrel/prompt.hpp"
#include "kestrel/records.hpp"

namespace kestrel {

/// Base citation ID for an evidence kind: e_seg_{tkey}, e_crop_{tkey},
/// e_count_{tkey}, e_countcmp_{tkey}, e_countvis_{tkey}, e_countviscmp_{tkey},
/// e_color_{tkey}, e_pos_{tkey}, e_exist_{tkey}, e_posrel_{claim_id}.
/// Throws Error(MissingScope) when the scope is empty.
std::string make_evidence_id(EvidenceType etype, std::string_view scope);

/// Per-sample evidence store. Re-registering identical content reuses its ID;
/// new content under a taken ID gets "_r{round}" (then "_r{round}_{n}").
class EvidenceRegistry {
 public:
  /// Registers `item` (its id field is the base ID) and returns the final ID.
  std::string add(EvidenceItem item, int round);

  const EvidenceItem* find(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t size() const noexcept { return items_.size(); }
  const std::vector<EvidenceItem>& items() const noexcept { return items_; }

  /// IDs used in a round, in registration order.
  std::vector<std::string> round_ids(int round) const;
  std::vector<EvidenceItem> round_items(int round) const;
  /// IDs first registered in a round.
  std::vector<std::string> new_ids(int round) const;

 private:
  std::vector<EvidenceItem> items_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<int, std::vector<std::string>> used_;
  std::map<int, std::vector<std::string>> fresh_;
};

/// Presence statement. The word "found" appears iff there are instances.
EvidenceItem derive_existence(const GroundingResult& result);

/// count_text, plus count_compare_text when a count is claimed.
std::vector<EvidenceItem> derive_count(const GroundingResult& result, std::optional<int> claimed, int max_instances);

/// count_vision_text, plus count_vision_compare_text when a count is claimed.
std::vector<EvidenceItem> derive_count_vision(const GroundingResult& result, int observed, std::optional<int> claimed);

/// color_text from an observer reply. Throws Error(NoInstances).
EvidenceItem derive_color(const GroundingResult& result, std::string_view color, std::string_view observation);

/// Degraded color_text from the mean masked color of the top instance.
/// Throws Error(NoInstances).
EvidenceItem derive_color_fallback(const Image& image, const GroundingResult& result);

/// One of the eleven basic color terms for a color, by HSV bucket.
std::string hue_bucket(Rgb color);

/// position_text per target (3x3 grid cell of the union box center) and, for a
/// two-target claim, position_relation_text between the top instances.
/// `results` holds the grounding of claim.targets, in order.
std::vector<EvidenceItem> derive_position(int image_width, int image_height, std::span<const GroundingResult> results,
                                          const Claim& claim);

/// Everything needed to assemble one round's evidence.
struct EvidenceContext {
  ImageData image;
  const GateConfig* gates = nullptr;
  const GroundingOptions* grounding = nullptr;
  const LoopOptions* loop = nullptr;
  ChatBackend* observer = nullptr;
  std::string observer_model;
  double temperature = 0.0;
  int max_tokens = 1024;
  const Templates* templates = nullptr;
  const Lexicon* lexicon = nullptr;
};

struct RoundEvidence {
  std::vector<std::string> ids;  // used this round, registry order
  std::vector<TraceEvent> events;
  long long observer_ms = 0;
};

/// Derives and registers the evidence for `claims` from per-target grounding
/// (keyed by TargetKey string). `escalate` adds crops of every instance, an
/// existence statement and an observer count for every target.
RoundEvidence gather_evidence(const EvidenceContext& ctx, const std::vector<Claim>& claims,
                              const std::map<std::string, GroundingResult>& grounding, bool escalate, int round,
                              EvidenceRegistry& registry);

}  // namespace kestrel
