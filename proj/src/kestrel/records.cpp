#include "kestrel/records.hpp"

#include <algorithm>
#include <array>

#include "kestrel/error.hpp"

namespace kestrel {

using nlohmann::json;

ImageData ImageData::of(ImagePtr image) {
  ImageData d;
  d.hash = image ? image->content_hash() : std::string();
  d.image = std::move(image);
  return d;
}

namespace {

constexpr std::array<std::pair<EvidenceType, std::string_view>, 10> kEvidenceNames = {{
    {EvidenceType::SegOverlay, "seg_overlay"},
    {EvidenceType::CropZoom, "crop_zoom"},
    {EvidenceType::CountText, "count_text"},
    {EvidenceType::CountCompareText, "count_compare_text"},
    {EvidenceType::CountVisionText, "count_vision_text"},
    {EvidenceType::CountVisionCompareText, "count_vision_compare_text"},
    {EvidenceType::ColorText, "color_text"},
    {EvidenceType::PositionText, "position_text"},
    {EvidenceType::PositionRelationText, "position_relation_text"},
    {EvidenceType::ExistenceText, "existence_text"},
}};

constexpr std::array<std::pair<GateDecision, std::string_view>, 5> kGateNames = {{
    {GateDecision::KeptNoTrigger, "kept_no_trigger"},
    {GateDecision::KeptBelowGate, "kept_below_gate"},
    {GateDecision::KeptNoCitation, "kept_no_citation"},
    {GateDecision::Flipped, "flipped"},
    {GateDecision::KeptSupported, "kept_supported"},
}};

constexpr std::array<std::pair<StopReason, std::string_view>, 4> kStopNames = {{
    {StopReason::StableSupported, "stable_supported"},
    {StopReason::MaxRounds, "max_rounds"},
    {StopReason::NoStrongerEvidence, "no_stronger_evidence"},
    {StopReason::EarlyError, "early_error"},
}};

template <class E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) {
  for (const auto& [e, n] : table) {
    if (e == v) return n;
  }
  return "unknown";
}

template <class E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s) {
  for (const auto& [e, n] : table) {
    if (n == s) return e;
  }
  return std::nullopt;
}

BinaryAnswer answer_field(const json& j, const char* key) {
  auto a = parse_binary_answer(j.at(key).get<std::string>());
  if (!a) throw Error(ErrorCode::ParseFailure, std::string("bad answer in field '") + key + "'");
  return *a;
}

template <class T>
T enum_field(std::optional<T> v, const std::string& what) {
  if (!v) throw Error(ErrorCode::ParseFailure, "unknown value for " + what);
  return *v;
}

json latency_json(const std::map<std::string, long long>& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

std::map<std::string, long long> latency_from(const json& j) {
  std::map<std::string, long long> m;
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value().get<long long>();
  }
  return m;
}

std::vector<std::string> strings(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  return j.at(key).get<std::vector<std::string>>();
}

}  // namespace

std::string_view to_string(EvidenceType t) noexcept { return name_of(kEvidenceNames, t); }
std::optional<EvidenceType> parse_evidence_type(std::string_view s) { return value_of(kEvidenceNames, s); }
bool is_image_evidence(EvidenceType t) noexcept {
  return t == EvidenceType::SegOverlay || t == EvidenceType::CropZoom;
}

std::string_view to_string(CheckStatus s) noexcept {
  switch (s) {
    case CheckStatus::Supported: return "supported";
    case CheckStatus::Contradicted: return "contradicted";
    case CheckStatus::Insufficient: return "insufficient";
  }
  return "insufficient";
}

std::optional<CheckStatus> parse_check_status(std::string_view s) {
  const auto l = to_lower(trim(s));
  if (l == "supported") return CheckStatus::Supported;
  if (l == "contradicted") return CheckStatus::Contradicted;
  if (l == "insufficient") return CheckStatus::Insufficient;
  return std::nullopt;
}

std::string_view to_string(GuardAnswer a) noexcept {
  switch (a) {
    case GuardAnswer::Yes: return "yes";
    case GuardAnswer::No: return "no";
    case GuardAnswer::Unclear: return "unclear";
  }
  return "unclear";
}

std::string_view to_string(GuardConfidence c) noexcept {
  switch (c) {
    case GuardConfidence::High: return "high";
    case GuardConfidence::Medium: return "medium";
    case GuardConfidence::Low: return "low";
  }
  return "low";
}

std::string_view to_string(GateDecision d) noexcept { return name_of(kGateNames, d); }
std::optional<GateDecision> parse_gate_decision(std::string_view s) { return value_of(kGateNames, s); }
std::string_view to_string(StopReason r) noexcept { return name_of(kStopNames, r); }
std::optional<StopReason> parse_stop_reason(std::string_view s) { return value_of(kStopNames, s); }

std::vector<std::string> RoundRecord::evidence_ids() const {
  std::vector<std::string> ids;
  ids.reserve(evidence.size());
  for (const auto& e : evidence) ids.push_back(e.id);
  return ids;
}

bool RunTrace::has_flag(std::string_view f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

json to_json(const Claim& c) {
  return {{"id", c.id},
          {"type", std::string(to_string(c.type))},
          {"text", c.text},
          {"targets", c.targets},
          {"priority", c.priority}};
}

Claim claim_from_json(const json& j) {
  Claim c;
  c.id = j.at("id").get<std::string>();
  c.type = enum_field(parse_claim_type(j.at("type").get<std::string>()), "claim type");
  c.text = j.at("text").get<std::string>();
  c.targets = j.at("targets").get<std::vector<std::string>>();
  c.priority = j.value("priority", 1);
  return c;
}

json to_json(const EvidenceItem& e) {
  json j = {{"id", e.id}, {"etype", std::string(to_string(e.etype))}, {"text", e.text}, {"round", e.round}};
  const auto& hash = e.image ? e.image.hash : e.image_hash;
  if (!hash.empty()) j["image"] = hash;
  if (!e.target.empty()) j["target"] = e.target;
  if (!e.claim_id.empty()) j["claim_id"] = e.claim_id;
  return j;
}

EvidenceItem evidence_from_json(const json& j) {
  EvidenceItem e;
  e.id = j.at("id").get<std::string>();
  e.etype = enum_field(parse_evidence_type(j.at("etype").get<std::string>()), "evidence type");
  e.text = j.value("text", "");
  e.image_hash = j.value("image", "");
  e.target = j.value("target", "");
  e.claim_id = j.value("claim_id", "");
  e.round = j.value("round", 0);
  return e;
}

json to_json(const ClaimCheck& c) {
  json j = {{"claim_id", c.claim_id},
            {"status", std::string(to_string(c.status))},
            {"confidence", c.confidence},
            {"why", c.why},
            {"citations", c.citations}};
  if (c.original_status != c.status) j["original_status"] = std::string(to_string(c.original_status));
  if (!c.stripped_citations.empty()) j["stripped_citations"] = c.stripped_citations;
  if (c.synthesized) j["synthesized"] = true;
  return j;
}

ClaimCheck check_from_json(const json& j) {
  ClaimCheck c;
  c.claim_id = j.at("claim_id").get<std::string>();
  c.status = enum_field(parse_check_status(j.at("status").get<std::string>()), "check status");
  c.confidence = j.at("confidence").get<double>();
  c.why = j.value("why", "");
  c.citations = strings(j, "citations");
  c.original_status = j.contains("original_status")
                          ? enum_field(parse_check_status(j.at("original_status").get<std::string>()), "status")
                          : c.status;
  c.stripped_citations = strings(j, "stripped_citations");
  c.synthesized = j.value("synthesized", false);
  return c;
}

json to_json(const VerificationReport& r) {
  json checked = json::array();
  for (const auto& c : r.checked) checked.push_back(to_json(c));
  json j = {{"verdict", std::string(to_string(r.verdict))}, {"checked", checked}, {"round", r.round}};
  if (r.advisory_verdict) j["advisory_verdict"] = std::string(to_string(*r.advisory_verdict));
  if (r.repaired) j["repaired"] = true;
  if (r.skipped) j["skipped"] = true;
  if (!r.parse_error.empty()) j["parse_error"] = r.parse_error;
  return j;
}

VerificationReport report_from_json(const json& j) {
  VerificationReport r;
  r.verdict = enum_field(parse_check_status(j.at("verdict").get<std::string>()), "verdict");
  for (const auto& c : j.at("checked")) r.checked.push_back(check_from_json(c));
  r.round = j.value("round", 0);
  if (j.contains("advisory_verdict")) {
    r.advisory_verdict = parse_check_status(j.at("advisory_verdict").get<std::string>());
  }
  r.repaired = j.value("repaired", false);
  r.skipped = j.value("skipped", false);
  r.parse_error = j.value("parse_error", "");
  return r;
}

json to_json(const YesGuardResult& y) {
  return {{"answer", std::string(to_string(y.answer))},
          {"confidence", std::string(to_string(y.confidence))},
          {"reason", y.reason}};
}

namespace {

YesGuardResult guard_from_json(const json& j) {
  YesGuardResult y;
  const auto a = j.at("answer").get<std::string>();
  y.answer = a == "yes" ? GuardAnswer::Yes : a == "no" ? GuardAnswer::No : GuardAnswer::Unclear;
  const auto c = j.at("confidence").get<std::string>();
  y.confidence = c == "high" ? GuardConfidence::High : c == "medium" ? GuardConfidence::Medium : GuardConfidence::Low;
  y.reason = j.value("reason", "");
  return y;
}

GroundingSummary grounding_from_json(const json& j) {
  GroundingSummary g;
  g.target = j.at("target").get<std::string>();
  g.tkey = j.value("tkey", "");
  g.scores = j.value("scores", std::vector<double>{});
  g.boxes = j.value("boxes", std::vector<std::array<int, 4>>{});
  g.threshold_used = j.value("threshold_used", 0.0);
  g.rechecked = j.value("rechecked", false);
  g.cached = j.value("cached", false);
  g.raw_scores = j.value("raw_scores", std::vector<double>{});
  return g;
}

}  // namespace

json to_json(const GroundingSummary& g) {
  return {{"target", g.target},         {"tkey", g.tkey},           {"scores", g.scores},
          {"boxes", g.boxes},           {"threshold_used", g.threshold_used},
          {"rechecked", g.rechecked},   {"cached", g.cached},       {"raw_scores", g.raw_scores}};
}

json to_json(const RoundRecord& r) {
  json claims = json::array();
  for (const auto& c : r.claims) claims.push_back(to_json(c));
  json grounding = json::array();
  for (const auto& g : r.grounding) grounding.push_back(to_json(g));
  json evidence = json::array();
  for (const auto& e : r.evidence) evidence.push_back(to_json(e));
  json j = {{"round", r.round},
            {"claims", claims},
            {"grounding", grounding},
            {"evidence", evidence},
            {"evidence_ids", r.evidence_ids()},
            {"new_evidence_ids", r.new_evidence_ids},
            {"report", to_json(r.report)},
            {"answer_before", std::string(to_string(r.answer_before))},
            {"answer_after", std::string(to_string(r.answer_after))},
            {"gate_decision", std::string(to_string(r.gate_decision))},
            {"latency_ms", latency_json(r.latency_ms)}};
  if (r.proposed_answer) j["proposed_answer"] = std::string(to_string(*r.proposed_answer));
  if (r.refine_repaired) j["refine_repaired"] = true;
  if (!r.refine_error.empty()) j["refine_error"] = r.refine_error;
  if (!r.trigger_claims.empty()) j["trigger_claims"] = r.trigger_claims;
  if (!r.trigger_citations.empty()) j["trigger_citations"] = r.trigger_citations;
  if (!r.flags.empty()) j["flags"] = r.flags;
  return j;
}

RoundRecord round_from_json(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  for (const auto& c : j.at("claims")) r.claims.push_back(claim_from_json(c));
  if (j.contains("grounding")) {
    for (const auto& g : j.at("grounding")) r.grounding.push_back(grounding_from_json(g));
  }
  for (const auto& e : j.at("evidence")) r.evidence.push_back(evidence_from_json(e));
  r.new_evidence_ids = strings(j, "new_evidence_ids");
  r.report = report_from_json(j.at("report"));
  if (j.contains("proposed_answer")) r.proposed_answer = answer_field(j, "proposed_answer");
  r.refine_repaired = j.value("refine_repaired", false);
  r.refine_error = j.value("refine_error", "");
  r.answer_before = answer_field(j, "answer_before");
  r.answer_after = answer_field(j, "answer_after");
  r.gate_decision = enum_field(parse_gate_decision(j.at("gate_decision").get<std::string>()), "gate decision");
  r.trigger_claims = strings(j, "trigger_claims");
  r.trigger_citations = strings(j, "trigger_citations");
  r.flags = strings(j, "flags");
  r.latency_ms = latency_from(j.value("latency_ms", json::object()));
  return r;
}

json to_json(const RunTrace& t) {
  json rounds = json::array();
  for (const auto& r : t.rounds) rounds.push_back(to_json(r));
  json claims = json::array();
  for (const auto& c : t.initial_claims) claims.push_back(to_json(c));
  json events = json::array();
  for (const auto& e : t.events) events.push_back({{"stage", e.stage}, {"kind", e.kind}, {"detail", e.detail}});
  json j = {{"schema_version", t.schema_version},
            {"sample_id", t.sample_id},
            {"question", t.question},
            {"image", t.image},
            {"meta", t.meta},
            {"expected_type", std::string(to_string(t.expected_type))},
            {"initial_answer", std::string(to_string(t.initial_answer))},
            {"initial_claims", claims},
            {"flags", t.flags},
            {"rounds", rounds},
            {"final_answer", std::string(to_string(t.final_answer))},
            {"stop_reason", t.stop_reason ? json(std::string(to_string(*t.stop_reason))) : json(nullptr)},
            {"events", events},
            {"latency_ms", latency_json(t.latency_ms)},
            {"total_latency_ms", t.total_latency_ms}};
  if (t.yes_guard) j["yes_guard"] = to_json(*t.yes_guard);
  if (!t.error.empty()) {
    j["error"] = t.error;
    j["error_stage"] = t.error_stage;
  }
  return j;
}

RunTrace trace_from_json(const json& j) {
  try {
    RunTrace t;
    t.schema_version = j.at("schema_version").get<int>();
    if (t.schema_version != kTraceSchemaVersion) {
      throw Error(ErrorCode::ParseFailure, "unsupported schema_version " + std::to_string(t.schema_version));
    }
    t.sample_id = j.at("sample_id").get<std::string>();
    t.question = j.value("question", "");
    t.image = j.value("image", "");
    t.meta = j.value("meta", std::map<std::string, std::string>{});
    t.expected_type = enum_field(parse_claim_type(j.value("expected_type", "existence")), "expected_type");
    t.initial_answer = answer_field(j, "initial_answer");
    if (j.contains("initial_claims")) {
      for (const auto& c : j.at("initial_claims")) t.initial_claims.push_back(claim_from_json(c));
    }
    if (j.contains("yes_guard")) t.yes_guard = guard_from_json(j.at("yes_guard"));
    t.flags = strings(j, "flags");
    for (const auto& r : j.at("rounds")) t.rounds.push_back(round_from_json(r));
    t.final_answer = answer_field(j, "final_answer");
    if (j.contains("stop_reason") && !j.at("stop_reason").is_null()) {
      t.stop_reason = enum_field(parse_stop_reason(j.at("stop_reason").get<std::string>()), "stop_reason");
    }
    t.error = j.value("error", "");
    t.error_stage = j.value("error_stage", "");
    if (j.contains("events")) {
      for (const auto& e : j.at("events")) {
        t.events.push_back({e.value("stage", ""), e.value("kind", ""), e.value("detail", "")});
      }
    }
    t.latency_ms = latency_from(j.value("latency_ms", json::object()));
    t.total_latency_ms = j.value("total_latency_ms", 0LL);
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("malformed trace record: ") + e.what());
  }
}

RunTrace without_timing(RunTrace t) {
  t.latency_ms.clear();
  t.total_latency_ms = 0;
  for (auto& r : t.rounds) r.latency_ms.clear();
  return t;
}

}  // namespace kestrel
