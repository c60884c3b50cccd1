#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kestrel/image.hpp"
#include "kestrel/lexicon.hpp"

namespace kestrel {

enum class BinaryAnswer { Yes, No };

std::string_view to_string(BinaryAnswer a) noexcept;
/// Case-insensitive exact match on "yes"/"no" after trimming.
std::optional<BinaryAnswer> parse_binary_answer(std::string_view text);
/// Leading yes/no token of free text ("Yes, there is..." -> Yes); nullopt otherwise.
std::optional<BinaryAnswer> leading_binary_answer(std::string_view text);
inline BinaryAnswer negate(BinaryAnswer a) noexcept {
  return a == BinaryAnswer::Yes ? BinaryAnswer::No : BinaryAnswer::Yes;
}

enum class ClaimType { Existence, Count, Color, Position };

inline constexpr std::array<ClaimType, 4> kAllClaimTypes = {
    ClaimType::Existence, ClaimType::Count, ClaimType::Color, ClaimType::Position};

std::string_view to_string(ClaimType t) noexcept;
std::optional<ClaimType> parse_claim_type(std::string_view text);

/// Normalized target phrase: lowercase, punctuation stripped, whitespace runs
/// joined by '_'. Idempotent.
class TargetKey {
 public:
  /// Throws Error(InvalidTarget) when nothing survives normalization.
  static TargetKey from_phrase(std::string_view phrase);

  const std::string& str() const noexcept { return key_; }

  friend auto operator<=>(const TargetKey&, const TargetKey&) = default;

 private:
  explicit TargetKey(std::string key) : key_(std::move(key)) {}
  std::string key_;
};

inline TargetKey normalize_target(std::string_view phrase) { return TargetKey::from_phrase(phrase); }

struct Claim {
  std::string id;
  ClaimType type = ClaimType::Existence;
  std::string text;
  std::vector<std::string> targets;
  int priority = 1;

  friend bool operator==(const Claim&, const Claim&) = default;
};

inline constexpr int kMaxClaimPriority = 10;

enum class ViolationCode {
  EmptyId,
  EmptyText,
  TargetCount,
  PairRequiresPosition,
  EmptyTarget,
  AttributeWord,
  NonPositivePriority,
};

std::string_view to_string(ViolationCode c) noexcept;

struct Violation {
  ViolationCode code;
  std::string detail;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
  bool has(ViolationCode c) const noexcept;
};

ValidationResult validate_claim(const Claim& claim, const Lexicon& lexicon = Lexicon::builtin());

/// Pipeline input. Carries no label.
struct Sample {
  std::string sample_id;
  ImageRef image;
  std::string question;
  std::map<std::string, std::string> meta;
};

/// Evaluation-side wrapper: only bench code reads the gold label.
struct LabeledSample {
  Sample sample;
  std::optional<BinaryAnswer> gold;
};

/// Whether a claim, read against the question, asserts the question's
/// proposition (Affirms) or its negation (Denies). Lexical: negation words,
/// and mismatching numerals, colors or relations.
enum class Stance { Affirms, Denies };

Stance claim_stance(const Claim& claim, std::string_view question,
                    const Lexicon& lexicon = Lexicon::builtin());

/// Number mentioned in a claim's text (digits or number words), if any.
std::optional<int> claimed_count(std::string_view text, const Lexicon& lexicon = Lexicon::builtin());

/// Canonical key used to deduplicate claims across rounds.
std::string claim_dedup_key(const Claim& claim);

}  // namespace kestrel
