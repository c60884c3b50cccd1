#include "kestrel/lexicon.hpp"

#include <algorithm>
#include <cctype>

#include "kestrel/geometry.hpp"
#include "kestrel/model.hpp"

namespace kestrel {

namespace {

constexpr std::string_view kNumberWords[] = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty"};

constexpr std::string_view kPositionWords[] = {
    "left", "right", "above", "below", "under", "underneath", "beneath", "over", "top",
    "bottom", "behind", "front", "beside", "near", "next", "between", "middle", "center",
    "centre", "upper", "lower", "atop", "inside", "outside", "leftmost", "rightmost"};

constexpr std::string_view kQuantifierWords[] = {
    "some", "many", "several", "few", "all", "each", "every", "any", "multiple", "both",
    "most", "more", "less", "fewer", "number", "pair", "couple", "none", "single", "lone",
    "numerous", "dozen"};

constexpr std::string_view kNegations[] = {"no", "not", "none", "never", "nothing", "without",
                                           "absent", "isn't", "aren't", "doesn't", "don't",
                                           "cannot", "can't", "nobody", "neither"};

// Color word -> basic term.
constexpr std::pair<std::string_view, std::string_view> kColors[] = {
    {"black", "black"},   {"white", "white"},     {"red", "red"},         {"green", "green"},
    {"yellow", "yellow"}, {"blue", "blue"},       {"brown", "brown"},     {"orange", "orange"},
    {"pink", "pink"},     {"purple", "purple"},   {"gray", "gray"},       {"grey", "gray"},
    {"silver", "gray"},   {"golden", "yellow"},   {"gold", "yellow"},     {"beige", "brown"},
    {"tan", "brown"},     {"navy", "blue"},       {"maroon", "red"},      {"violet", "purple"},
    {"cyan", "blue"},     {"magenta", "pink"},    {"turquoise", "blue"},  {"crimson", "red"},
    {"lime", "green"},    {"teal", "green"},      {"indigo", "blue"},     {"scarlet", "red"}};

// Function words dropped when extracting targets from a question.
constexpr std::string_view kQuestionStopWords[] = {
    "is", "are", "was", "were", "there", "a", "an", "the", "any", "in", "of", "on", "this",
    "that", "these", "those", "image", "picture", "photo", "photograph", "scene", "does",
    "do", "did", "have", "has", "how", "many", "much", "it", "its", "to", "side", "visible",
    "shown", "present", "contain", "contains", "see", "can", "you", "at", "by", "with", "and",
    "or", "appear", "appears", "located", "placed", "standing", "sitting", "s", "what",
    "which", "color", "colour", "exactly", "total"};

bool contains(std::span<const std::string_view> set, std::string_view w) {
  return std::find(set.begin(), set.end(), w) != set.end();
}

}  // namespace

std::string_view to_string(WordClass c) noexcept {
  switch (c) {
    case WordClass::None: return "none";
    case WordClass::Color: return "color";
    case WordClass::Number: return "number";
    case WordClass::Position: return "position";
    case WordClass::Quantifier: return "quantifier";
    case WordClass::Custom: return "custom";
  }
  return "none";
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n\f\v");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    // Leading/trailing apostrophes are quote marks, not contractions.
    while (!cur.empty() && cur.back() == '\'') cur.pop_back();
    std::size_t lead = 0;
    while (lead < cur.size() && cur[lead] == '\'') ++lead;
    if (lead < cur.size()) out.push_back(cur.substr(lead));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

Lexicon::Lexicon() {
  for (std::size_t i = 0; i < std::size(kNumberWords); ++i) {
    numbers_.emplace(std::string(kNumberWords[i]), static_cast<int>(i));
    classes_.emplace(std::string(kNumberWords[i]), WordClass::Number);
  }
  for (auto w : kPositionWords) classes_.emplace(std::string(w), WordClass::Position);
  for (auto w : kQuantifierWords) classes_.emplace(std::string(w), WordClass::Quantifier);
  for (auto [w, canon] : kColors) {
    colors_.emplace(std::string(w), std::string(canon));
    classes_.emplace(std::string(w), WordClass::Color);
  }
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon kBuiltin;
  return kBuiltin;
}

Lexicon Lexicon::with_extra_stop_words(std::span<const std::string> words) const {
  Lexicon out = *this;
  for (const auto& w : words) {
    auto lw = to_lower(trim(w));
    if (lw.empty()) continue;
    out.classes_.try_emplace(lw, WordClass::Custom);
    out.extra_.push_back(std::move(lw));
  }
  return out;
}

WordClass Lexicon::classify(std::string_view token) const {
  if (number_value(token)) return WordClass::Number;
  if (auto it = classes_.find(std::string(token)); it != classes_.end()) return it->second;
  return WordClass::None;
}

std::optional<int> Lexicon::number_value(std::string_view token) const {
  if (!token.empty() && std::all_of(token.begin(), token.end(),
                                    [](unsigned char c) { return std::isdigit(c); })) {
    if (token.size() > 6) return std::nullopt;
    return std::stoi(std::string(token));
  }
  if (auto it = numbers_.find(std::string(token)); it != numbers_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::string> Lexicon::canonical_color(std::string_view token) const {
  if (auto it = colors_.find(std::string(token)); it != colors_.end()) return it->second;
  return std::nullopt;
}

bool Lexicon::is_negation(std::string_view token) const {
  if (contains(kNegations, token)) return true;
  return token.size() > 3 && token.substr(token.size() - 3) == "n't";
}

const std::vector<std::string>& basic_color_terms() {
  static const std::vector<std::string> kTerms = {"black", "white", "red",    "green",
                                                  "yellow", "blue", "brown",  "orange",
                                                  "pink",  "purple", "gray"};
  return kTerms;
}

std::string number_word(int n) {
  if (n >= 0 && n < static_cast<int>(std::size(kNumberWords))) return std::string(kNumberWords[n]);
  return std::to_string(n);
}

std::optional<RelationMatch> find_relation(std::span<const std::string> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    auto match = [&](Relation r, std::size_t len) {
      // Absorb a leading "to the" / "on the" and a trailing "of"/"side of".
      std::size_t begin = i;
      if (begin >= 2 && tokens[begin - 1] == "the" &&
          (tokens[begin - 2] == "to" || tokens[begin - 2] == "on")) {
        begin -= 2;
      }
      std::size_t end = i + len;
      if (end < tokens.size() && tokens[end] == "side") ++end;
      if (end < tokens.size() && tokens[end] == "of") ++end;
      return RelationMatch{r, begin, end};
    };
    if (t == "left" || t == "leftmost") return match(Relation::LeftOf, 1);
    if (t == "right" || t == "rightmost") return match(Relation::RightOf, 1);
    if (t == "above" || t == "over" || t == "atop") return match(Relation::Above, 1);
    if (t == "below" || t == "under" || t == "underneath" || t == "beneath") {
      return match(Relation::Below, 1);
    }
    if (t == "on" && i + 1 < tokens.size() && tokens[i + 1] == "top" && i + 2 < tokens.size() &&
        tokens[i + 2] == "of") {
      return RelationMatch{Relation::Above, i, i + 3};
    }
  }
  return std::nullopt;
}

ClaimType route_claim_type(std::string_view question, const Lexicon& lexicon) {
  const auto tokens = tokenize(question);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == "how" && i + 1 < tokens.size() &&
        (tokens[i + 1] == "many" || tokens[i + 1] == "much")) {
      return ClaimType::Count;
    }
    if (lexicon.number_value(tokens[i])) return ClaimType::Count;
  }
  for (const auto& t : tokens) {
    if (lexicon.canonical_color(t)) return ClaimType::Color;
  }
  if (find_relation(tokens)) return ClaimType::Position;
  for (const auto& t : tokens) {
    if (lexicon.classify(t) == WordClass::Position) return ClaimType::Position;
  }
  return ClaimType::Existence;
}

namespace {

// Longest run of content tokens in [begin, end), joined by spaces.
std::string content_phrase(std::span<const std::string> tokens, const Lexicon& lexicon,
                           bool keep_modifiers) {
  std::string best;
  std::string cur;
  auto close = [&] {
    if (cur.size() > best.size()) best = cur;
    cur.clear();
  };
  for (const auto& t : tokens) {
    const bool stop = contains(kQuestionStopWords, t) || lexicon.is_negation(t);
    const WordClass wc = lexicon.classify(t);
    const bool attribute = wc != WordClass::None && !(keep_modifiers && wc == WordClass::Color);
    if (stop || attribute) {
      close();
      continue;
    }
    if (!cur.empty()) cur += ' ';
    cur += t;
  }
  close();
  return best;
}

}  // namespace

std::vector<std::string> extract_targets(std::string_view question, ClaimType type,
                                         const Lexicon& lexicon) {
  const auto tokens = tokenize(question);
  std::vector<std::string> out;
  if (type == ClaimType::Position) {
    if (auto rel = find_relation(tokens)) {
      auto subject = content_phrase(std::span(tokens).subspan(0, rel->begin), lexicon, true);
      auto anchor = content_phrase(std::span(tokens).subspan(rel->end), lexicon, true);
      if (!subject.empty()) out.push_back(subject);
      if (!anchor.empty()) out.push_back(anchor);
      return out;
    }
  }
  auto phrase = content_phrase(tokens, lexicon, false);
  if (!phrase.empty()) out.push_back(phrase);
  return out;
}

}  // namespace kestrel
