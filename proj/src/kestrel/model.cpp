#include "kestrel/model.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "kestrel/error.hpp"
#include "kestrel/geometry.hpp"

namespace kestrel {

std::string_view to_string(BinaryAnswer a) noexcept { return a == BinaryAnswer::Yes ? "Yes" : "No"; }

std::optional<BinaryAnswer> parse_binary_answer(std::string_view text) {
  const auto t = to_lower(trim(text));
  if (t == "yes") return BinaryAnswer::Yes;
  if (t == "no") return BinaryAnswer::No;
  return std::nullopt;
}

std::optional<BinaryAnswer> leading_binary_answer(std::string_view text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) return std::nullopt;
  return parse_binary_answer(tokens.front());
}

std::string_view to_string(ClaimType t) noexcept {
  switch (t) {
    case ClaimType::Existence: return "existence";
    case ClaimType::Count: return "count";
    case ClaimType::Color: return "color";
    case ClaimType::Position: return "position";
  }
  return "existence";
}

std::optional<ClaimType> parse_claim_type(std::string_view text) {
  for (auto t : kAllClaimTypes) {
    if (to_string(t) == text) return t;
  }
  return std::nullopt;
}

TargetKey TargetKey::from_phrase(std::string_view phrase) {
  std::string kept;
  kept.reserve(phrase.size());
  for (unsigned char c : phrase) {
    if (std::isalnum(c) || c == '_') {
      kept.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      kept.push_back(' ');
    }
  }
  const auto trimmed = trim(kept);
  std::string key;
  bool in_space = false;
  for (char c : trimmed) {
    if (c == ' ') {
      in_space = true;
      continue;
    }
    if (in_space) key.push_back('_');
    in_space = false;
    key.push_back(c);
  }
  if (key.empty()) {
    throw Error(ErrorCode::InvalidTarget, "target '" + std::string(phrase) + "' is empty after normalization");
  }
  return TargetKey(std::move(key));
}

std::string_view to_string(ViolationCode c) noexcept {
  switch (c) {
    case ViolationCode::EmptyId: return "empty_id";
    case ViolationCode::EmptyText: return "empty_text";
    case ViolationCode::TargetCount: return "target_count";
    case ViolationCode::PairRequiresPosition: return "pair_requires_position";
    case ViolationCode::EmptyTarget: return "empty_target";
    case ViolationCode::AttributeWord: return "attribute_word";
    case ViolationCode::NonPositivePriority: return "non_positive_priority";
  }
  return "unknown";
}

bool ValidationResult::has(ViolationCode c) const noexcept {
  return std::any_of(violations.begin(), violations.end(),
                     [c](const Violation& v) { return v.code == c; });
}

ValidationResult validate_claim(const Claim& claim, const Lexicon& lexicon) {
  ValidationResult r;
  if (trim(claim.id).empty()) r.violations.push_back({ViolationCode::EmptyId, "claim id is empty"});
  if (trim(claim.text).empty()) r.violations.push_back({ViolationCode::EmptyText, "claim text is empty"});
  if (claim.priority < 1) {
    r.violations.push_back({ViolationCode::NonPositivePriority, "priority must be >= 1"});
  }
  const auto n = claim.targets.size();
  if (n < 1 || n > 2) {
    r.violations.push_back({ViolationCode::TargetCount,
                            "expected 1 or 2 targets, got " + std::to_string(n)});
  } else if (n == 2 && claim.type != ClaimType::Position) {
    r.violations.push_back({ViolationCode::TargetCount,
                            "two targets are only allowed for position claims"});
  }
  for (const auto& target : claim.targets) {
    const auto tokens = tokenize(target);
    if (tokens.empty()) {
      r.violations.push_back({ViolationCode::EmptyTarget, "target '" + target + "' is empty"});
      continue;
    }
    if (claim.type == ClaimType::Position) continue;
    for (const auto& tok : tokens) {
      const auto wc = lexicon.classify(tok);
      if (wc != WordClass::None) {
        r.violations.push_back({ViolationCode::AttributeWord,
                                std::string(to_string(wc)) + " word '" + tok + "' in target '" +
                                    target + "'"});
      }
    }
  }
  return r;
}

std::optional<int> claimed_count(std::string_view text, const Lexicon& lexicon) {
  for (const auto& t : tokenize(text)) {
    if (auto v = lexicon.number_value(t)) return v;
  }
  return std::nullopt;
}

namespace {

std::set<std::string> colors_in(std::span<const std::string> tokens, const Lexicon& lexicon) {
  std::set<std::string> out;
  for (const auto& t : tokens) {
    if (auto c = lexicon.canonical_color(t)) out.insert(*c);
  }
  return out;
}

std::string key_or_empty(std::string_view phrase) {
  try {
    return TargetKey::from_phrase(phrase).str();
  } catch (const Error&) {
    return {};
  }
}

}  // namespace

Stance claim_stance(const Claim& claim, std::string_view question, const Lexicon& lexicon) {
  const auto ct = tokenize(claim.text);
  const auto qt = tokenize(question);
  int flips = 0;
  for (const auto& t : ct) {
    if (lexicon.is_negation(t)) ++flips;
  }
  for (const auto& t : qt) {
    if (lexicon.is_negation(t)) ++flips;
  }

  switch (claim.type) {
    case ClaimType::Count: {
      const auto cn = claimed_count(claim.text, lexicon);
      const auto qn = claimed_count(question, lexicon);
      if (cn && qn && *cn != *qn) ++flips;
      break;
    }
    case ClaimType::Color: {
      const auto cc = colors_in(ct, lexicon);
      const auto qc = colors_in(qt, lexicon);
      if (!cc.empty() && !qc.empty() &&
          std::none_of(cc.begin(), cc.end(), [&](const auto& c) { return qc.count(c) > 0; })) {
        ++flips;
      }
      break;
    }
    case ClaimType::Position: {
      const auto cr = find_relation(ct);
      const auto qr = find_relation(qt);
      if (cr && qr) {
        Relation claim_rel = cr->relation;
        const auto q_targets = extract_targets(question, ClaimType::Position, lexicon);
        if (claim.targets.size() == 2 && q_targets.size() == 2 &&
            key_or_empty(claim.targets[0]) == key_or_empty(q_targets[1]) &&
            key_or_empty(claim.targets[1]) == key_or_empty(q_targets[0])) {
          claim_rel = inverse(claim_rel);
        }
        if (claim_rel != qr->relation) ++flips;
      }
      break;
    }
    case ClaimType::Existence:
      break;
  }
  return flips % 2 == 0 ? Stance::Affirms : Stance::Denies;
}

std::string claim_dedup_key(const Claim& claim) {
  std::string key(to_string(claim.type));
  key += '|';
  for (const auto& t : claim.targets) {
    key += key_or_empty(t);
    key += ',';
  }
  key += '|';
  for (const auto& tok : tokenize(claim.text)) {
    key += tok;
    key += ' ';
  }
  return key;
}

}  // namespace kestrel
