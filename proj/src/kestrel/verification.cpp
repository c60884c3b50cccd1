#include "kestrel/verification.hpp"

#include <algorithm>

#include "kestrel/error.hpp"

namespace kestrel {

std::vector<CitationViolation> validate_citations(std::vector<ClaimCheck>& checks,
                                                  const std::set<std::string>& allowed) {
  std::vector<CitationViolation> violations;
  for (auto& c : checks) {
    std::vector<std::string> kept;
    for (auto& id : c.citations) {
      if (allowed.count(id) != 0) {
        if (std::find(kept.begin(), kept.end(), id) == kept.end()) kept.push_back(std::move(id));
      } else {
        violations.push_back({c.claim_id, id});
        c.stripped_citations.push_back(std::move(id));
      }
    }
    c.citations = std::move(kept);
    if (c.citations.empty() && c.status != CheckStatus::Insufficient) c.status = CheckStatus::Insufficient;
  }
  return violations;
}

bool is_confident(const ClaimCheck& check, const GateConfig& gates, const std::map<std::string, ClaimType>& ctype_of) {
  auto it = ctype_of.find(check.claim_id);
  return it != ctype_of.end() && check.confidence >= gates.gate_for(it->second);
}

CheckStatus consolidate(const std::vector<ClaimCheck>& checks, const GateConfig& gates,
                        const std::map<std::string, ClaimType>& ctype_of) {
  if (checks.empty()) throw Error(ErrorCode::EmptyChecks, "consolidate needs at least one check");
  for (const auto& c : checks) {
    if (c.status == CheckStatus::Contradicted && is_confident(c, gates, ctype_of) &&
        (!gates.require_citations_for_flip || !c.citations.empty())) {
      return CheckStatus::Contradicted;
    }
  }
  const bool all_supported = std::all_of(checks.begin(), checks.end(), [&](const ClaimCheck& c) {
    return c.status == CheckStatus::Supported && is_confident(c, gates, ctype_of);
  });
  return all_supported ? CheckStatus::Supported : CheckStatus::Insufficient;
}

std::vector<ClaimCheck> totalize(const std::vector<ClaimCheck>& judged, const std::vector<Claim>& claims,
                                 std::vector<std::string>* dropped) {
  std::vector<ClaimCheck> out;
  for (const auto& claim : claims) {
    auto it = std::find_if(judged.begin(), judged.end(), [&](const ClaimCheck& c) { return c.claim_id == claim.id; });
    if (it != judged.end()) {
      out.push_back(*it);
    } else {
      ClaimCheck c;
      c.claim_id = claim.id;
      c.why = "no judgment returned for this claim";
      c.synthesized = true;
      out.push_back(std::move(c));
    }
  }
  if (dropped) {
    for (const auto& c : judged) {
      if (std::none_of(claims.begin(), claims.end(), [&](const Claim& cl) { return cl.id == c.claim_id; })) {
        dropped->push_back(c.claim_id);
      }
    }
  }
  return out;
}

std::map<std::string, ClaimType> claim_types(const std::vector<Claim>& claims) {
  std::map<std::string, ClaimType> out;
  for (const auto& c : claims) out.emplace(c.id, c.type);
  return out;
}

VerificationReport skipped_report(const std::vector<Claim>& claims, int round) {
  VerificationReport r;
  r.round = round;
  r.skipped = true;
  r.checked = totalize({}, claims);
  for (auto& c : r.checked) c.why = "verification disabled";
  r.verdict = CheckStatus::Insufficient;
  return r;
}

VerifyOutcome verify_round(const VerifyInput& input, ChatBackend& judge, const std::string& model,
                           const GateConfig& gates, const BackendOptions& params, const Templates& templates) {
  VerifyOutcome out;
  auto bundle = build_verify_prompt(input.question, input.claims, input.evidence, input.prev, input.context, templates);
  auto response = judge.chat(ChatRequest::from_bundle(bundle, model, params.temperature, params.max_tokens));
  for (auto& ev : response.events) out.events.push_back({"verify", "retry", ev});
  out.raw = response.text;

  auto& report = out.report;
  report.round = input.round;
  auto parsed = parse_verify_response(response.text);
  if (!parsed.ok()) {
    report = skipped_report(input.claims, input.round);
    report.skipped = true;
    report.parse_error = parsed.error ? parsed.error->message : "unparseable judge output";
    for (auto& c : report.checked) c.why = "judge output could not be parsed";
    out.events.push_back({"verify", "parse_error", report.parse_error});
    return out;
  }
  report.repaired = parsed.repaired;
  if (parsed.repaired) {
    std::string steps;
    for (const auto& s : parsed.repair_steps) steps += (steps.empty() ? "" : ",") + s;
    out.events.push_back({"verify", "repair", steps});
  }
  report.advisory_verdict = parsed.value->verdict;

  std::vector<std::string> dropped;
  report.checked = totalize(parsed.value->checked, input.claims, &dropped);
  for (const auto& id : dropped) out.events.push_back({"verify", "unknown_claim", id});
  for (const auto& c : report.checked) {
    if (c.synthesized) out.events.push_back({"verify", "missing_check", c.claim_id});
  }

  std::set<std::string> allowed;
  for (const auto& e : input.evidence) allowed.insert(e.id);
  for (const auto& v : validate_citations(report.checked, allowed)) {
    out.events.push_back({"verify", "citation_stripped", v.claim_id + ": " + v.citation});
  }
  report.verdict = consolidate(report.checked, gates, claim_types(input.claims));
  return out;
}

}  // namespace kestrel
