#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/error.hpp"
#include "kestrel/model.hpp"
#include "kestrel/records.hpp"

namespace kestrel {

namespace detail {
struct EmbeddedTemplate {
  const char* name;
  const char* text;
};
const std::vector<EmbeddedTemplate>& embedded_templates();
}  // namespace detail

enum class TemplateId { Init, YesGuard, Verify, Refine, ColorObserve, CountVision, DirectAnswer };

std::string_view to_string(TemplateId id) noexcept;
std::optional<TemplateId> parse_template_id(std::string_view s);

struct TemplateText {
  std::string name;
  int version = 0;
  std::string body;  // header line removed
};

/// Parses "## template: <name> version: <n>" off the first line.
/// Throws Error(InvalidArgument) when the header is missing.
TemplateText parse_template_file(std::string_view text);

/// Placeholder grammar: "{name}" for a fixed set of names; any other brace
/// text is copied literally. Substitution is single-pass, so values may
/// contain braces. A line holding an unset optional placeholder
/// ({prev_summary}, {prev_verdict_json}) is dropped; an unset required one
/// throws Error(InvalidArgument).
class Templates {
 public:
  static const Templates& builtin();
  /// Builtins overridden by any "<name>.txt" present in `dir`.
  static Templates from_directory(const std::filesystem::path& dir);

  const TemplateText& get(TemplateId id) const;
  std::map<std::string, int> versions() const;
  std::string render(TemplateId id, const std::map<std::string, std::string>& values) const;

 private:
  std::map<TemplateId, TemplateText> templates_;
};

struct ContentPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string text;
  ImageData image;

  static ContentPart text_part(std::string t) { return {Kind::Text, std::move(t), {}}; }
  static ContentPart image_part(ImageData img) { return {Kind::Image, {}, std::move(img)}; }
};

/// One user turn: ordered text and image parts.
struct PromptBundle {
  TemplateId template_id = TemplateId::Init;
  int template_version = 0;
  std::vector<ContentPart> parts;
  std::map<std::string, std::string> substitutions;

  /// Text parts joined with newlines.
  std::string text() const;
  std::size_t image_count() const;
};

PromptBundle build_init_prompt(const Sample& sample, const ImageData& image, ClaimType expected,
                               const std::optional<std::string>& prev_summary,
                               const Lexicon& lexicon = Lexicon::builtin(),
                               const Templates& templates = Templates::builtin());

PromptBundle build_yes_guard_prompt(const Sample& sample, const ImageData& image, std::string_view target_hint,
                                    const Templates& templates = Templates::builtin());

/// Evidence follows the instruction text, one "[<id>] (<etype>) <text>" line per
/// item; image items carry "see attached image" and are followed by the image.
/// When no image evidence exists, `context` (if set) is attached as a
/// non-citable reference image. Throws InvalidArgument on zero claims and
/// UnknownEvidenceKind for image evidence without an image.
PromptBundle build_verify_prompt(std::string_view question, std::span<const Claim> claims,
                                 std::span<const EvidenceItem> evidence,
                                 const std::optional<VerificationReport>& prev_verdict,
                                 const ImageData& context = {},
                                 const Templates& templates = Templates::builtin());

PromptBundle build_refine_prompt(const Sample& sample, const ImageData& image, ClaimType expected,
                                 BinaryAnswer prev_answer, const nlohmann::json& round_history,
                                 const nlohmann::json& current_round_context,
                                 const Lexicon& lexicon = Lexicon::builtin(),
                                 const Templates& templates = Templates::builtin());

PromptBundle build_color_prompt(std::string_view target, const ImageData& crop, const ImageData& full,
                                const Templates& templates = Templates::builtin());
PromptBundle build_count_vision_prompt(std::string_view target, const ImageData& boxes,
                                       const Templates& templates = Templates::builtin());
PromptBundle build_direct_prompt(const Sample& sample, const ImageData& image,
                                 const Templates& templates = Templates::builtin());

/// JSON array text used for the example_targets placeholder.
std::string example_targets_json(std::string_view question, ClaimType expected,
                                 const Lexicon& lexicon = Lexicon::builtin());

// ---- constrained output parsing ----

struct ParseError {
  ErrorCode code = ErrorCode::ParseFailure;  // ParseFailure or SchemaViolation
  std::string message;
  std::vector<std::string> fields;
};

template <class T>
struct Parsed {
  std::optional<T> value;
  std::optional<ParseError> error;
  bool repaired = false;
  std::vector<std::string> repair_steps;
  std::string raw;

  bool ok() const noexcept { return value.has_value(); }
};

/// Judge output before local consolidation.
struct JudgeOutput {
  std::optional<CheckStatus> verdict;
  std::vector<ClaimCheck> checked;

  friend bool operator==(const JudgeOutput&, const JudgeOutput&) = default;
};

Parsed<InitResult> parse_init_response(std::string_view raw, ClaimType expected,
                                       const Lexicon& lexicon = Lexicon::builtin());
Parsed<YesGuardResult> parse_yes_guard_response(std::string_view raw);
Parsed<JudgeOutput> parse_verify_response(std::string_view raw);
Parsed<RefineResult> parse_refine_response(std::string_view raw, ClaimType expected,
                                           const Lexicon& lexicon = Lexicon::builtin());

using AnyParsed = std::variant<Parsed<InitResult>, Parsed<YesGuardResult>, Parsed<JudgeOutput>, Parsed<RefineResult>>;
/// Dispatch on the template; throws Error(InvalidArgument) for templates
/// without a JSON schema.
AnyParsed parse_constrained_json(std::string_view raw, TemplateId schema, ClaimType expected = ClaimType::Existence,
                                 const Lexicon& lexicon = Lexicon::builtin());

// Response-shaped serializers; parsing their dump() yields an equal value.
nlohmann::json init_result_json(const InitResult& r);
nlohmann::json yes_guard_json(const YesGuardResult& r);
nlohmann::json judge_output_json(const JudgeOutput& r);
nlohmann::json refine_result_json(const RefineResult& r);

/// First basic color term in a free-text observation ("the bus is red" -> "red").
std::optional<std::string> parse_color_observation(std::string_view raw, const Lexicon& lexicon = Lexicon::builtin());
/// First integer (digits or number word) in a reply.
std::optional<int> parse_count_reply(std::string_view raw, const Lexicon& lexicon = Lexicon::builtin());

}  // namespace kestrel
