#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kestrel/backends.hpp"
#include "kestrel/config.hpp"
#include "kestrel/prompt.hpp"
#include "kestrel/records.hpp"

namespace kestrel {

/// Answer a decisive check points to, given the claim's stance toward the
/// question: supported+affirms and contradicted+denies give Yes, the other
/// two give No; insufficient gives nothing.
std::optional<BinaryAnswer> implied_answer(CheckStatus status, Stance stance);

struct GateOutcome {
  BinaryAnswer answer = BinaryAnswer::No;
  GateDecision decision = GateDecision::KeptNoTrigger;
  std::vector<std::string> trigger_claims;
  std::vector<std::string> trigger_citations;
};

/// Evidence-gated update. A proposal different from `prev` is accepted only
/// when (a) the verdict is contradicted and a confident, cited contradicted
/// check implies the proposal, or (b) the verdict is supported and every check
/// is confident, cited and implies the proposal. The condition does not depend
/// on `prev`. Blocked proposals report why: kept_no_citation when a confident
/// judgment lost its citations, kept_below_gate when the verdict is
/// insufficient or the judgment was under the gate, kept_no_trigger otherwise.
GateOutcome gate_update(BinaryAnswer prev, BinaryAnswer proposed, const VerificationReport& report,
                        const std::vector<Claim>& claims, std::string_view question, const GateConfig& gates,
                        const Lexicon& lexicon = Lexicon::builtin());

/// Answer implied by the verdict alone (used when self-refinement is off).
BinaryAnswer verdict_answer(BinaryAnswer prev, const VerificationReport& report, const std::vector<Claim>& claims,
                            std::string_view question, const GateConfig& gates,
                            const Lexicon& lexicon = Lexicon::builtin());

struct ClaimIntake {
  std::vector<Claim> claims;
  bool reused = false;
};

/// Orders the refiner's claims (implicated by a contradiction first, then
/// related to insufficient checks, then by priority), drops claims already seen
/// in `history`, and keeps at most `limit`. When nothing new remains, reuses the
/// highest-priority historical claim whose last check was not supported, or
/// else the most recent one. IDs are left for the caller to assign.
ClaimIntake next_claims(const std::vector<Claim>& proposed, const VerificationReport& report,
                        const std::vector<RoundRecord>& history, int limit);

/// Stop check after a completed round, in precedence order stable_supported,
/// max_rounds, no_stronger_evidence.
std::optional<StopReason> should_stop(const std::vector<RoundRecord>& rounds, const GateConfig& gates);

/// Digest of past rounds given to the refiner.
nlohmann::json round_history_json(const std::vector<RoundRecord>& rounds);
/// The current round as the refiner sees it (before gating).
nlohmann::json current_round_json(const RoundRecord& round);

/// Runs one sample end to end. Never throws for backend or parse failures:
/// they end the trace with stop_reason early_error.
RunTrace run_sample(const Sample& sample, const BackendSet& backends, const EngineConfig& config,
                    const Templates& templates = Templates::builtin());

struct RegateResult {
  std::vector<BinaryAnswer> answers;  // answer_after per round
  std::vector<GateDecision> decisions;
  std::vector<CheckStatus> verdicts;
  int flips = 0;
  BinaryAnswer final_answer = BinaryAnswer::No;
  /// Where the stop rule would have ended the recomputed run.
  std::optional<StopReason> stop_reason;
  int stop_round = 0;
};

/// Recomputes verdicts, gate decisions and answers of a recorded trace under
/// other gate settings, using the recorded judge checks and proposals. All
/// recorded rounds (up to max_rounds) are replayed; the stop rule is evaluated
/// but does not truncate.
RegateResult regate_trace(const RunTrace& trace, const GateConfig& gates, const Lexicon& lexicon = Lexicon::builtin());

}  // namespace kestrel
