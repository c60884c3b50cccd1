#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kestrel/backends.hpp"
#include "kestrel/config.hpp"
#include "kestrel/prompt.hpp"
#include "kestrel/records.hpp"

namespace kestrel {

struct CitationViolation {
  std::string claim_id;
  std::string citation;
};

/// Removes citations outside `allowed`, recording each removal, and downgrades
/// a supported/contradicted check left without citations to insufficient
/// (confidence kept).
std::vector<CitationViolation> validate_citations(std::vector<ClaimCheck>& checks, const std::set<std::string>& allowed);

/// Top-level verdict. A check is confident when its confidence reaches the
/// gate of its claim type (claims missing from `ctype_of` never are).
/// Contradicted if any contradicted check is confident and cited (citation
/// requirement per gates.require_citations_for_flip); otherwise supported if
/// every check is supported and confident; otherwise insufficient.
/// Throws Error(EmptyChecks).
CheckStatus consolidate(const std::vector<ClaimCheck>& checks, const GateConfig& gates,
                        const std::map<std::string, ClaimType>& ctype_of);

bool is_confident(const ClaimCheck& check, const GateConfig& gates, const std::map<std::string, ClaimType>& ctype_of);

/// One check per claim in claim order: the judge's first check for each
/// claim, or a synthesized insufficient/0.0 one. Checks for unknown claims are
/// dropped and returned in `dropped`.
std::vector<ClaimCheck> totalize(const std::vector<ClaimCheck>& judged, const std::vector<Claim>& claims,
                                 std::vector<std::string>* dropped = nullptr);

std::map<std::string, ClaimType> claim_types(const std::vector<Claim>& claims);

struct VerifyInput {
  std::string question;
  std::vector<Claim> claims;
  std::vector<EvidenceItem> evidence;  // the round slice
  std::optional<VerificationReport> prev;
  ImageData context;  // attached when there is no image evidence
  int round = 1;
};

struct VerifyOutcome {
  VerificationReport report;
  std::string raw;
  std::vector<TraceEvent> events;
};

/// Asks the judge, parses with repair, totalizes, validates citations against
/// the round slice and recomputes the verdict locally. Unparseable output
/// yields an all-insufficient report. Backend errors propagate.
VerifyOutcome verify_round(const VerifyInput& input, ChatBackend& judge, const std::string& model,
                           const GateConfig& gates, const BackendOptions& params,
                           const Templates& templates = Templates::builtin());

/// Report used when verification is switched off.
VerificationReport skipped_report(const std::vector<Claim>& claims, int round);

}  // namespace kestrel
