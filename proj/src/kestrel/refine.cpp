#include "kestrel/refine.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "kestrel/error.hpp"
#include "kestrel/evidence.hpp"
#include "kestrel/grounding.hpp"
#include "kestrel/verification.hpp"

namespace kestrel {

using nlohmann::json;

std::optional<BinaryAnswer> implied_answer(CheckStatus status, Stance stance) {
  switch (status) {
    case CheckStatus::Supported: return stance == Stance::Affirms ? BinaryAnswer::Yes : BinaryAnswer::No;
    case CheckStatus::Contradicted: return stance == Stance::Affirms ? BinaryAnswer::No : BinaryAnswer::Yes;
    case CheckStatus::Insufficient: return std::nullopt;
  }
  return std::nullopt;
}

namespace {

const Claim* claim_by_id(const std::vector<Claim>& claims, const std::string& id) {
  auto it = std::find_if(claims.begin(), claims.end(), [&](const Claim& c) { return c.id == id; });
  return it == claims.end() ? nullptr : &*it;
}

std::optional<BinaryAnswer> check_implies(const ClaimCheck& check, CheckStatus status, const std::vector<Claim>& claims,
                                          std::string_view question, const Lexicon& lexicon) {
  const auto* claim = claim_by_id(claims, check.claim_id);
  if (!claim) return std::nullopt;
  return implied_answer(status, claim_stance(*claim, question, lexicon));
}

bool decisive(CheckStatus s) { return s != CheckStatus::Insufficient; }

}  // namespace

GateOutcome gate_update(BinaryAnswer prev, BinaryAnswer proposed, const VerificationReport& report,
                        const std::vector<Claim>& claims, std::string_view question, const GateConfig& gates,
                        const Lexicon& lexicon) {
  GateOutcome out;
  out.answer = prev;
  if (!gates.use_gating || !gates.use_claim_verification) {
    out.answer = proposed;
    out.decision = proposed != prev ? GateDecision::Flipped
                   : report.verdict == CheckStatus::Supported ? GateDecision::KeptSupported
                                                              : GateDecision::KeptNoTrigger;
    return out;
  }
  if (proposed == prev) {
    out.decision = report.verdict == CheckStatus::Supported ? GateDecision::KeptSupported : GateDecision::KeptNoTrigger;
    return out;
  }

  const auto types = claim_types(claims);
  auto cited = [&](const ClaimCheck& c) { return !gates.require_citations_for_flip || !c.citations.empty(); };
  auto implies = [&](const ClaimCheck& c, CheckStatus s) { return check_implies(c, s, claims, question, lexicon); };

  auto fire = [&](const std::vector<const ClaimCheck*>& triggers) {
    out.answer = proposed;
    out.decision = GateDecision::Flipped;
    for (const auto* c : triggers) {
      out.trigger_claims.push_back(c->claim_id);
      for (const auto& id : c->citations) {
        if (std::find(out.trigger_citations.begin(), out.trigger_citations.end(), id) == out.trigger_citations.end()) {
          out.trigger_citations.push_back(id);
        }
      }
    }
    return out;
  };

  if (report.verdict == CheckStatus::Contradicted) {
    std::vector<const ClaimCheck*> triggers;
    for (const auto& c : report.checked) {
      if (c.status == CheckStatus::Contradicted && is_confident(c, gates, types) && cited(c) &&
          implies(c, c.status) == proposed) {
        triggers.push_back(&c);
      }
    }
    if (!triggers.empty()) return fire(triggers);
  } else if (report.verdict == CheckStatus::Supported && !report.checked.empty()) {
    std::vector<const ClaimCheck*> triggers;
    for (const auto& c : report.checked) {
      if (c.status == CheckStatus::Supported && is_confident(c, gates, types) && cited(c) &&
          implies(c, c.status) == proposed) {
        triggers.push_back(&c);
      }
    }
    if (triggers.size() == report.checked.size()) return fire(triggers);
  }

  for (const auto& c : report.checked) {
    if (decisive(c.original_status) && c.citations.empty() && is_confident(c, gates, types) &&
        implies(c, c.original_status) == proposed) {
      out.decision = GateDecision::KeptNoCitation;
      return out;
    }
  }
  if (report.verdict == CheckStatus::Insufficient) {
    out.decision = GateDecision::KeptBelowGate;
    return out;
  }
  for (const auto& c : report.checked) {
    if (decisive(c.status) && !is_confident(c, gates, types) && implies(c, c.status) == proposed) {
      out.decision = GateDecision::KeptBelowGate;
      return out;
    }
  }
  out.decision = GateDecision::KeptNoTrigger;
  return out;
}

BinaryAnswer verdict_answer(BinaryAnswer prev, const VerificationReport& report, const std::vector<Claim>& claims,
                            std::string_view question, const GateConfig& gates, const Lexicon& lexicon) {
  const auto types = claim_types(claims);
  if (report.verdict == CheckStatus::Contradicted) {
    for (const auto& c : report.checked) {
      if (c.status == CheckStatus::Contradicted && is_confident(c, gates, types)) {
        if (auto a = check_implies(c, c.status, claims, question, lexicon)) return *a;
      }
    }
  } else if (report.verdict == CheckStatus::Supported && !report.checked.empty()) {
    if (auto a = check_implies(report.checked.front(), CheckStatus::Supported, claims, question, lexicon)) return *a;
  }
  return prev;
}

ClaimIntake next_claims(const std::vector<Claim>& proposed, const VerificationReport& report,
                        const std::vector<RoundRecord>& history, int limit) {
  ClaimIntake out;
  std::set<std::string> seen;
  for (const auto& r : history) {
    for (const auto& c : r.claims) seen.insert(claim_dedup_key(c));
  }

  // Targets of the latest round's claims, by the status their check received.
  std::set<std::string> contradicted_targets;
  std::set<std::string> insufficient_targets;
  if (!history.empty()) {
    const auto& last_claims = history.back().claims;
    for (const auto& check : report.checked) {
      const auto* claim = claim_by_id(last_claims, check.claim_id);
      if (!claim || check.status == CheckStatus::Supported) continue;
      auto& bucket = check.status == CheckStatus::Contradicted ? contradicted_targets : insufficient_targets;
      for (const auto& t : claim->targets) bucket.insert(TargetKey::from_phrase(t).str());
    }
  }
  auto touches = [](const Claim& c, const std::set<std::string>& targets) {
    return std::any_of(c.targets.begin(), c.targets.end(), [&](const std::string& t) {
      try {
        return targets.count(TargetKey::from_phrase(t).str()) != 0;
      } catch (const Error&) {
        return false;
      }
    });
  };

  std::vector<Claim> fresh;
  std::set<std::string> taken;
  for (const auto& c : proposed) {
    const auto key = claim_dedup_key(c);
    if (seen.count(key) || !taken.insert(key).second) continue;
    fresh.push_back(c);
  }
  auto rank = [&](const Claim& c) {
    return std::make_tuple(touches(c, contradicted_targets) ? 0 : 1, touches(c, insufficient_targets) ? 0 : 1,
                           -c.priority);
  };
  std::stable_sort(fresh.begin(), fresh.end(), [&](const Claim& a, const Claim& b) { return rank(a) < rank(b); });
  if (static_cast<int>(fresh.size()) > limit) fresh.resize(static_cast<std::size_t>(std::max(1, limit)));

  if (!fresh.empty()) {
    out.claims = std::move(fresh);
    return out;
  }
  out.reused = true;
  const Claim* best = nullptr;
  for (const auto& r : history) {
    for (const auto& c : r.claims) {
      auto it = std::find_if(r.report.checked.begin(), r.report.checked.end(),
                             [&](const ClaimCheck& k) { return k.claim_id == c.id; });
      const bool unresolved = it == r.report.checked.end() || it->status != CheckStatus::Supported;
      if (unresolved && (!best || c.priority >= best->priority)) best = &c;
    }
  }
  if (!best && !history.empty() && !history.back().claims.empty()) best = &history.back().claims.front();
  if (best) out.claims.push_back(*best);
  return out;
}

std::optional<StopReason> should_stop(const std::vector<RoundRecord>& rounds, const GateConfig& gates) {
  if (rounds.empty()) return std::nullopt;
  const int n = static_cast<int>(rounds.size());
  const int k = std::max(1, gates.stable_supported_rounds);
  if (n >= k) {
    const auto answer = rounds.back().answer_after;
    bool stable = true;
    for (int i = n - k; i < n; ++i) {
      if (rounds[i].report.verdict != CheckStatus::Supported || rounds[i].answer_after != answer) stable = false;
    }
    if (stable) return StopReason::StableSupported;
  }
  if (n >= gates.max_rounds) return StopReason::MaxRounds;
  if (n >= 2) {
    const auto& last = rounds[n - 1];
    const auto& before = rounds[n - 2];
    if (last.new_evidence_ids.empty() && last.report.verdict == before.report.verdict &&
        last.answer_after == last.answer_before) {
      return StopReason::NoStrongerEvidence;
    }
  }
  return std::nullopt;
}

namespace {

json claims_digest(const std::vector<Claim>& claims) {
  json out = json::array();
  for (const auto& c : claims) {
    out.push_back({{"id", c.id}, {"type", std::string(to_string(c.type))}, {"text", c.text}, {"targets", c.targets}});
  }
  return out;
}

json checks_digest(const VerificationReport& report) {
  json out = json::array();
  for (const auto& c : report.checked) {
    out.push_back({{"claim_id", c.claim_id},
                   {"status", std::string(to_string(c.status))},
                   {"confidence", c.confidence},
                   {"why", c.why},
                   {"citations", c.citations}});
  }
  return out;
}

}  // namespace

json round_history_json(const std::vector<RoundRecord>& rounds) {
  json out = json::array();
  for (const auto& r : rounds) {
    json entry = {{"round", r.round},
                  {"hypothesis", {{"answer", std::string(to_string(r.answer_before))}, {"claims", claims_digest(r.claims)}}},
                  {"verify", {{"verdict", std::string(to_string(r.report.verdict))}, {"checked", checks_digest(r.report)}}},
                  {"refine",
                   {{"proposed", r.proposed_answer ? json(std::string(to_string(*r.proposed_answer))) : json(nullptr)},
                    {"answer", std::string(to_string(r.answer_after))},
                    {"gate", std::string(to_string(r.gate_decision))}}}};
    out.push_back(std::move(entry));
  }
  return out;
}

json current_round_json(const RoundRecord& round) {
  json evidence = json::array();
  for (const auto& e : round.evidence) {
    evidence.push_back({{"id", e.id}, {"type", std::string(to_string(e.etype))}, {"text", e.text}});
  }
  return {{"round", round.round},
          {"hypothesis", {{"answer", std::string(to_string(round.answer_before))}, {"claims", claims_digest(round.claims)}}},
          {"evidence", evidence},
          {"verify", {{"verdict", std::string(to_string(round.report.verdict))}, {"checked", checks_digest(round.report)}}}};
}

namespace {

using Clock = std::chrono::steady_clock;

long long ms_since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
}

/// Failure that ends a run; carries the stage it happened in.
struct StageFailure {
  std::string stage;
  std::string message;
};

class SampleRun {
 public:
  SampleRun(const Sample& sample, const BackendSet& backends, const EngineConfig& config, const Templates& templates)
      : sample_(sample), backends_(backends), config_(config), gates_(config.gate), templates_(templates),
        lexicon_(config.lexicon()) {}

  RunTrace run() {
    const auto start = Clock::now();
    trace_.sample_id = sample_.sample_id;
    trace_.question = sample_.question;
    trace_.image = sample_.image.describe();
    trace_.meta = sample_.meta;
    trace_.expected_type = route_claim_type(sample_.question, lexicon_);
    try {
      prepare();
      loop();
    } catch (const StageFailure& f) {
      trace_.stop_reason = StopReason::EarlyError;
      trace_.error_stage = f.stage;
      trace_.error = f.message;
      trace_.events.push_back({f.stage, "error", f.message});
    }
    trace_.final_answer = answer_;
    trace_.total_latency_ms = ms_since(start);
    return std::move(trace_);
  }

 private:
  template <class F>
  auto stage(const std::string& name, F&& f, std::map<std::string, long long>& latency) {
    const auto start = Clock::now();
    try {
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        latency[name] += ms_since(start);
      } else {
        auto r = f();
        latency[name] += ms_since(start);
        return r;
      }
    } catch (const Error& e) {
      latency[name] += ms_since(start);
      throw StageFailure{name, std::string(to_string(e.code())) + ": " + e.what()};
    } catch (const std::exception& e) {
      latency[name] += ms_since(start);
      throw StageFailure{name, e.what()};
    }
  }

  ChatRequest request(const PromptBundle& bundle, const std::string& model) const {
    return ChatRequest::from_bundle(bundle, model, config_.backends.temperature, config_.backends.max_tokens);
  }

  void note_retries(const std::string& stage_name, const ChatResponse& r) {
    for (const auto& ev : r.events) trace_.events.push_back({stage_name, "retry", ev});
  }

  std::string next_id() { return "c" + std::to_string(++claim_counter_); }

  void prepare() {
    auto image = stage("load_image", [&] { return sample_.image.load(); }, trace_.latency_ms);
    image_ = stage("load_image", [&] { return ImageData::of(image); }, trace_.latency_ms);
    if (const auto* p = sample_.image.path()) {
      image_path_ = p->string();
    } else {
      trace_.image = "sha256:" + image_.hash;
    }
    initialize();
  }

  void initialize() {
    const auto expected = trace_.expected_type;
    if (!backends_.initializer) {
      trace_.flags.push_back("init_unavailable");
      throw StageFailure{"init", "no initializer backend bound"};
    }
    std::optional<InitResult> init;
    std::optional<std::string> summary;
    const int attempts = std::max(1, config_.loop.init_attempts);
    for (int attempt = 1; attempt <= attempts && !init; ++attempt) {
      ChatResponse response;
      try {
        response = stage("init", [&] {
          return backends_.initializer->chat(
              request(build_init_prompt(sample_, image_, expected, summary, lexicon_, templates_),
                      config_.backends.initializer.model));
        }, trace_.latency_ms);
      } catch (const StageFailure&) {
        answer_ = BinaryAnswer::No;
        trace_.initial_answer = answer_;
        trace_.flags.push_back("init_unavailable");
        throw;
      }
      note_retries("init", response);
      auto parsed = parse_init_response(response.text, expected, lexicon_);
      if (parsed.ok()) {
        if (parsed.repaired) trace_.events.push_back({"init", "repair", join(parsed.repair_steps)});
        init = *parsed.value;
      } else {
        const auto msg = parsed.error ? parsed.error->message : "unparseable";
        trace_.events.push_back({"init", "parse_error", msg + " | raw: " + response.text});
        summary = "previous reply was rejected: " + msg;
      }
    }
    if (!init) init = fallback_init(expected);

    answer_ = init->answer;
    trace_.initial_answer = answer_;
    claims_ = init->claims;
    for (auto& c : claims_) c.id = next_id();

    if (answer_ == BinaryAnswer::Yes && gates_.enable_yes_guard) yes_guard();
    trace_.initial_claims = claims_;
  }

  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
    return out;
  }

  InitResult fallback_init(ClaimType expected) {
    trace_.flags.push_back("fallback_init");
    auto response = stage("init", [&] {
      return backends_.initializer->chat(request(build_direct_prompt(sample_, image_, templates_),
                                                 config_.backends.initializer.model));
    }, trace_.latency_ms);
    note_retries("init", response);
    InitResult r;
    if (auto a = leading_binary_answer(response.text)) {
      r.answer = *a;
    } else {
      trace_.events.push_back({"init", "parse_error", "direct answer unparseable, defaulting to No: " + response.text});
      r.answer = BinaryAnswer::No;
    }
    Claim c;
    c.type = expected;
    c.targets = extract_targets(sample_.question, expected, lexicon_);
    if (c.targets.empty()) throw StageFailure{"init", "no target could be extracted from the question"};
    auto text = trim(sample_.question);
    while (!text.empty() && (text.back() == '?' || text.back() == '.')) text.pop_back();
    c.text = text;
    r.claims.push_back(std::move(c));
    return r;
  }

  void yes_guard() {
    const std::string hint = claims_.empty() || claims_.front().targets.empty() ? "" : claims_.front().targets.front();
    ChatResponse response;
    try {
      response = stage("yes_guard", [&] {
        return backends_.initializer->chat(
            request(build_yes_guard_prompt(sample_, image_, hint, templates_), config_.backends.initializer.model));
      }, trace_.latency_ms);
    } catch (const StageFailure& f) {
      trace_.events.push_back({"yes_guard", "error", f.message});
      return;
    }
    note_retries("yes_guard", response);
    auto parsed = parse_yes_guard_response(response.text);
    if (!parsed.ok()) {
      trace_.events.push_back({"yes_guard", "parse_error", parsed.error ? parsed.error->message : "unparseable"});
      return;
    }
    trace_.yes_guard = *parsed.value;
    if (parsed.value->answer == GuardAnswer::No && parsed.value->confidence == GuardConfidence::High) {
      for (auto& c : claims_) c.priority = kMaxClaimPriority;
      trace_.flags.push_back("low_trust_initial");
    }
  }

  void loop() {
    Grounder grounder(backends_.grounder, gates_, config_.grounding);
    EvidenceRegistry registry;
    const int max_rounds = gates_.use_self_refinement ? std::max(1, gates_.max_rounds) : 1;
    bool next_reused = false;
    for (int r = 1; r <= max_rounds; ++r) {
      RoundRecord rec;
      rec.round = r;
      rec.claims = claims_;
      if (next_reused) rec.flags.push_back("claim_reused");
      rec.answer_before = answer_;

      // Grounding, one query per distinct target.
      std::map<std::string, GroundingResult> grounding;
      if (gates_.use_grounding) {
        stage("ground", [&] {
          for (const auto& c : claims_) {
            for (const auto& t : c.targets) {
              const auto key = TargetKey::from_phrase(t).str();
              if (grounding.count(key)) continue;
              auto g = grounder.ground(image_, image_path_, t, c.type);
              rec.grounding.push_back(summarize(g));
              grounding.emplace(key, std::move(g));
            }
          }
        }, rec.latency_ms);

        const bool escalate = r > 1 && config_.loop.evidence_escalation &&
                              trace_.rounds.back().report.verdict != CheckStatus::Supported;
        auto gathered = stage("evidence", [&] {
          EvidenceContext ctx;
          ctx.image = image_;
          ctx.gates = &gates_;
          ctx.grounding = &config_.grounding;
          ctx.loop = &config_.loop;
          ctx.observer = backends_.color_observer.get();
          ctx.observer_model = config_.backends.color_observer.model;
          ctx.temperature = config_.backends.temperature;
          ctx.max_tokens = config_.backends.max_tokens;
          ctx.templates = &templates_;
          ctx.lexicon = &lexicon_;
          return gather_evidence(ctx, claims_, grounding, escalate, r, registry);
        }, rec.latency_ms);
        for (auto& ev : gathered.events) trace_.events.push_back(std::move(ev));
        if (escalate) rec.flags.push_back("escalated");
        rec.evidence = registry.round_items(r);
        rec.new_evidence_ids = registry.new_ids(r);
      }

      // Verification.
      if (gates_.use_claim_verification) {
        if (!backends_.judge) throw StageFailure{"verify", "no judge backend bound"};
        VerifyInput in;
        in.question = sample_.question;
        in.claims = claims_;
        in.evidence = rec.evidence;
        if (config_.gate.use_history && !trace_.rounds.empty()) in.prev = trace_.rounds.back().report;
        in.context = image_;
        in.round = r;
        auto outcome = stage("verify", [&] {
          return verify_round(in, *backends_.judge, config_.backends.judge.model, gates_, config_.backends, templates_);
        }, rec.latency_ms);
        for (auto& ev : outcome.events) trace_.events.push_back(std::move(ev));
        rec.report = std::move(outcome.report);
      } else {
        rec.report = skipped_report(claims_, r);
      }

      // Refinement proposes an answer and the next claim.
      std::vector<Claim> proposed_claims;
      if (gates_.use_self_refinement) {
        if (!backends_.refiner) throw StageFailure{"refine", "no refiner backend bound"};
        const auto history = gates_.use_history ? round_history_json(trace_.rounds) : json::array();
        auto response = stage("refine", [&] {
          return backends_.refiner->chat(request(
              build_refine_prompt(sample_, image_, trace_.expected_type, answer_, history, current_round_json(rec),
                                  lexicon_, templates_),
              config_.backends.refiner.model));
        }, rec.latency_ms);
        note_retries("refine", response);
        auto parsed = parse_refine_response(response.text, trace_.expected_type, lexicon_);
        if (parsed.ok()) {
          rec.proposed_answer = parsed.value->answer;
          rec.refine_repaired = parsed.repaired;
          proposed_claims = parsed.value->new_claims;
        } else {
          rec.refine_error = parsed.error ? parsed.error->message : "unparseable";
          trace_.events.push_back({"refine", "parse_error", rec.refine_error});
        }
      } else {
        rec.proposed_answer = verdict_answer(answer_, rec.report, claims_, sample_.question, gates_, lexicon_);
      }

      const auto gate = stage("gate", [&] {
        return gate_update(answer_, rec.proposed_answer.value_or(answer_), rec.report, claims_, sample_.question,
                           gates_, lexicon_);
      }, rec.latency_ms);
      rec.answer_after = gate.answer;
      rec.gate_decision = gate.decision;
      rec.trigger_claims = gate.trigger_claims;
      rec.trigger_citations = gate.trigger_citations;
      answer_ = gate.answer;

      trace_.rounds.push_back(std::move(rec));
      auto stop = gates_.use_self_refinement ? should_stop(trace_.rounds, gates_) : std::optional(StopReason::MaxRounds);
      if (!stop && r == max_rounds) stop = StopReason::MaxRounds;
      if (stop) {
        trace_.stop_reason = stop;
        return;
      }

      const int limit = config_.loop.multi_claim ? std::max(1, config_.loop.max_claims_per_round) : 1;
      auto intake = next_claims(proposed_claims, trace_.rounds.back().report, trace_.rounds, limit);
      next_reused = intake.reused;
      if (intake.claims.empty()) throw StageFailure{"refine", "no claim available for the next round"};
      claims_ = std::move(intake.claims);
      for (auto& c : claims_) c.id = next_id();
    }
  }

  const Sample& sample_;
  const BackendSet& backends_;
  const EngineConfig& config_;
  const GateConfig& gates_;
  const Templates& templates_;
  Lexicon lexicon_;
  RunTrace trace_;
  ImageData image_;
  std::string image_path_;
  BinaryAnswer answer_ = BinaryAnswer::No;
  std::vector<Claim> claims_;
  int claim_counter_ = 0;
};

}  // namespace

RunTrace run_sample(const Sample& sample, const BackendSet& backends, const EngineConfig& config,
                    const Templates& templates) {
  return SampleRun(sample, backends, config, templates).run();
}

RegateResult regate_trace(const RunTrace& trace, const GateConfig& gates, const Lexicon& lexicon) {
  RegateResult out;
  BinaryAnswer answer = trace.initial_answer;
  std::vector<RoundRecord> replayed;
  const auto limit = std::min<std::size_t>(trace.rounds.size(), static_cast<std::size_t>(std::max(1, gates.max_rounds)));
  for (std::size_t i = 0; i < limit; ++i) {
    RoundRecord r = trace.rounds[i];
    if (!r.report.skipped && !r.report.checked.empty()) {
      r.report.verdict = consolidate(r.report.checked, gates, claim_types(r.claims));
    }
    r.answer_before = answer;
    const auto g = gate_update(answer, r.proposed_answer.value_or(answer), r.report, r.claims, trace.question, gates,
                               lexicon);
    r.answer_after = g.answer;
    r.gate_decision = g.decision;
    if (g.answer != answer) ++out.flips;
    answer = g.answer;
    out.answers.push_back(g.answer);
    out.decisions.push_back(g.decision);
    out.verdicts.push_back(r.report.verdict);
    replayed.push_back(std::move(r));
    if (!out.stop_reason) {
      if (auto stop = should_stop(replayed, gates)) {
        out.stop_reason = stop;
        out.stop_round = static_cast<int>(replayed.size());
      }
    }
  }
  out.final_answer = answer;
  return out;
}

}  // namespace kestrel
