#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kestrel {

enum class ClaimType;
enum class Relation;

/// Word classes that may not appear in a non-position claim target.
enum class WordClass { None, Color, Number, Position, Quantifier, Custom };

std::string_view to_string(WordClass c) noexcept;

/// Lowercased [a-z0-9'] tokens.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

/// Small English lexicon of color, numeral, spatial and quantifier terms,
/// extensible with caller-provided stop words.
class Lexicon {
 public:
  static const Lexicon& builtin();

  Lexicon with_extra_stop_words(std::span<const std::string> words) const;

  WordClass classify(std::string_view token) const;

  /// Digits or number words ("zero".."twenty").
  std::optional<int> number_value(std::string_view token) const;

  /// Canonical basic color term for a color word ("grey" -> "gray").
  std::optional<std::string> canonical_color(std::string_view token) const;

  bool is_negation(std::string_view token) const;

  const std::vector<std::string>& extra_stop_words() const noexcept { return extra_; }

 private:
  Lexicon();

  std::unordered_map<std::string, WordClass> classes_;
  std::unordered_map<std::string, std::string> colors_;
  std::unordered_map<std::string, int> numbers_;
  std::vector<std::string> extra_;
};

/// The eleven basic color terms, in a fixed order.
const std::vector<std::string>& basic_color_terms();

/// Spelled-out number for 0..20, digits otherwise.
std::string number_word(int n);

/// Keyword routing: numerals or "how many" -> count; color words -> color;
/// spatial words -> position; otherwise existence.
ClaimType route_claim_type(std::string_view question, const Lexicon& lexicon = Lexicon::builtin());

/// First spatial relation phrase in the text together with its token span
/// [begin, end) within tokenize(text).
struct RelationMatch {
  Relation relation;
  std::size_t begin = 0;
  std::size_t end = 0;
};
std::optional<RelationMatch> find_relation(std::span<const std::string> tokens);

/// Heuristic target extraction from a question; used for the example_targets
/// placeholder and the fallback initialization claim. Returns an empty list
/// when nothing object-like remains.
std::vector<std::string> extract_targets(std::string_view question, ClaimType type,
                                         const Lexicon& lexicon = Lexicon::builtin());

}  // namespace kestrel
