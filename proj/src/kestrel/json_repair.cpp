#include "kestrel/json_repair.hpp"

namespace kestrel {

std::optional<nlohmann::json> parse_strict(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

std::string strip_code_fences(std::string_view text) {
  const auto open = text.find("```");
  if (open == std::string_view::npos) return std::string(text);
  auto body_start = text.find('\n', open);
  if (body_start == std::string_view::npos) {
    body_start = open + 3;
  } else {
    ++body_start;
  }
  const auto close = text.find("```", body_start);
  const auto body = text.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start);
  return std::string(body);
}

std::optional<std::string> first_balanced_object(std::string_view text) {
  const auto start = text.find('{');
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return std::string(text.substr(start, i - start + 1));
    }
  }
  return std::nullopt;
}

std::string normalize_quotes_and_commas(std::string_view text) {
  std::string quotes;
  quotes.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    // U+201C/U+201D -> '"', U+2018/U+2019 -> '\''
    if (i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
        static_cast<unsigned char>(text[i + 1]) == 0x80) {
      const auto c = static_cast<unsigned char>(text[i + 2]);
      if (c == 0x9C || c == 0x9D) {
        quotes += '"';
        i += 2;
        continue;
      }
      if (c == 0x98 || c == 0x99) {
        quotes += '\'';
        i += 2;
        continue;
      }
    }
    quotes += text[i];
  }

  std::string out;
  out.reserve(quotes.size());
  bool in_string = false;
  for (std::size_t i = 0; i < quotes.size(); ++i) {
    const char c = quotes[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < quotes.size()) {
        out += quotes[++i];
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      auto j = quotes.find_first_not_of(" \t\r\n", i + 1);
      if (j != std::string::npos && (quotes[j] == '}' || quotes[j] == ']')) continue;
    }
    out += c;
  }
  return out;
}

RepairOutcome parse_with_repair(std::string_view raw) {
  RepairOutcome out;
  auto attempt = [&](std::string text) {
    out.text = std::move(text);
    out.value = parse_strict(out.text);
    return out.value.has_value();
  };
  if (attempt(std::string(raw))) return out;

  std::string current(raw);
  auto fenced = strip_code_fences(current);
  if (fenced != current) {
    out.steps.push_back("strip_fences");
    current = std::move(fenced);
    if (attempt(current)) return out;
  }

  if (auto obj = first_balanced_object(current); obj && *obj != current) {
    out.steps.push_back("extract_object");
    current = *obj;
    if (attempt(current)) return out;
  }

  auto normalized = normalize_quotes_and_commas(current);
  if (auto obj = first_balanced_object(normalized)) normalized = *obj;
  if (normalized != current) {
    out.steps.push_back("normalize_quotes_commas");
    current = std::move(normalized);
    if (attempt(current)) return out;
  }

  out.error = out.steps.empty() ? "not valid JSON" : "not valid JSON after repair";
  return out;
}

}  // namespace kestrel
