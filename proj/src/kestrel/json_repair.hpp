#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace kestrel {

/// Outcome of the bounded repair ladder. `text` is the exact string that was
/// finally handed to the strict parser.
struct RepairOutcome {
  std::optional<nlohmann::json> value;
  std::vector<std::string> steps;  // applied repairs, in order
  std::string text;
  std::string error;

  bool repaired() const noexcept { return !steps.empty(); }
};

/// Strict parse first; on failure tries, cumulatively: strip markdown fences,
/// take the first balanced {...} block, normalize smart quotes and trailing
/// commas. Never throws.
RepairOutcome parse_with_repair(std::string_view raw);

std::string strip_code_fences(std::string_view text);
/// First balanced top-level object, string-literal aware.
std::optional<std::string> first_balanced_object(std::string_view text);
/// Curly quotes to ASCII and trailing commas before '}' / ']' removed.
std::string normalize_quotes_and_commas(std::string_view text);

/// Strict RFC 8259 parse; nullopt on any error.
std::optional<nlohmann::json> parse_strict(std::string_view text);

}  // namespace kestrel
