#include "kestrel/prompt.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "kestrel/json_repair.hpp"

namespace kestrel {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<TemplateId, std::string_view>, 7> kTemplateNames = {{
    {TemplateId::Init, "init"},
    {TemplateId::YesGuard, "yes_guard"},
    {TemplateId::Verify, "verify"},
    {TemplateId::Refine, "refine"},
    {TemplateId::ColorObserve, "color_observe"},
    {TemplateId::CountVision, "count_vision"},
    {TemplateId::DirectAnswer, "direct_answer"},
}};

const std::set<std::string, std::less<>> kPlaceholders = {
    "question",        "expected_claim_type", "example_targets",    "prev_summary",
    "claims_json",     "evidence_ids_json",   "prev_verdict_json",  "round_history_json",
    "current_round_context_json", "previous_answer", "target_hint", "target"};

const std::set<std::string, std::less<>> kOptionalPlaceholders = {"prev_summary", "prev_verdict_json"};

constexpr std::string_view kImageMarker = "<image>";

bool is_ident_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

// Placeholder names referenced on a line.
std::vector<std::string> placeholders_in(std::string_view line) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < line.size() && is_ident_char(line[j])) ++j;
    if (j < line.size() && line[j] == '}' && j > i + 1) {
      auto name = line.substr(i + 1, j - i - 1);
      if (kPlaceholders.count(name)) out.emplace_back(name);
    }
  }
  return out;
}

std::string substitute_line(std::string_view line, const std::map<std::string, std::string>& values) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '{') {
      std::size_t j = i + 1;
      while (j < line.size() && is_ident_char(line[j])) ++j;
      if (j < line.size() && line[j] == '}' && j > i + 1) {
        const std::string name(line.substr(i + 1, j - i - 1));
        if (auto it = values.find(name); it != values.end() && kPlaceholders.count(name)) {
          out += it->second;
          i = j;
          continue;
        }
      }
    }
    out += line[i];
  }
  return out;
}

// Splits rendered text at "<image>" lines; images go there, or first when the
// template has no marker.
std::vector<ContentPart> assemble(const std::string& rendered, const std::vector<ImageData>& images) {
  std::vector<ContentPart> parts;
  std::vector<std::string> chunks{""};
  std::stringstream ss(rendered);
  std::string line;
  bool first_line = true;
  std::size_t markers = 0;
  while (std::getline(ss, line)) {
    if (trim(line) == kImageMarker) {
      chunks.emplace_back();
      ++markers;
      first_line = true;
      continue;
    }
    if (!first_line) chunks.back() += '\n';
    chunks.back() += line;
    first_line = false;
  }
  std::size_t next_image = 0;
  if (markers == 0) {
    for (const auto& img : images) parts.push_back(ContentPart::image_part(img));
    next_image = images.size();
  }
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    if (c > 0 && next_image < images.size()) parts.push_back(ContentPart::image_part(images[next_image++]));
    if (!trim(chunks[c]).empty()) parts.push_back(ContentPart::text_part(chunks[c]));
  }
  for (; next_image < images.size(); ++next_image) parts.push_back(ContentPart::image_part(images[next_image]));
  return parts;
}

PromptBundle make_bundle(TemplateId id, const Templates& templates, std::map<std::string, std::string> values,
                         const std::vector<ImageData>& images) {
  PromptBundle b;
  b.template_id = id;
  b.template_version = templates.get(id).version;
  b.parts = assemble(templates.render(id, values), images);
  b.substitutions = std::move(values);
  return b;
}

std::string quoted_json_string(std::string_view s) {
  // Placeholders inside "..." in the templates take the value without its quotes.
  auto dumped = json(std::string(s)).dump();
  return dumped.substr(1, dumped.size() - 2);
}

}  // namespace

std::string_view to_string(TemplateId id) noexcept {
  for (const auto& [t, n] : kTemplateNames) {
    if (t == id) return n;
  }
  return "init";
}

std::optional<TemplateId> parse_template_id(std::string_view s) {
  for (const auto& [t, n] : kTemplateNames) {
    if (n == s) return t;
  }
  return std::nullopt;
}

TemplateText parse_template_file(std::string_view text) {
  const auto nl = text.find('\n');
  const auto header = trim(text.substr(0, nl));
  std::istringstream hs(header);
  std::string hashes, tag, name, vtag;
  int version = 0;
  if (!(hs >> hashes >> tag >> name >> vtag >> version) || hashes != "##" || tag != "template:" ||
      vtag != "version:") {
    throw Error(ErrorCode::InvalidArgument, "template header must be '## template: <name> version: <n>'");
  }
  std::string body(nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1));
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
  return {name, version, body};
}

const Templates& Templates::builtin() {
  static const Templates kBuiltin = [] {
    Templates t;
    for (const auto& e : detail::embedded_templates()) {
      auto parsed = parse_template_file(e.text);
      auto id = parse_template_id(e.name);
      if (id) t.templates_[*id] = std::move(parsed);
    }
    return t;
  }();
  return kBuiltin;
}

Templates Templates::from_directory(const std::filesystem::path& dir) {
  Templates t = builtin();
  for (const auto& [id, name] : kTemplateNames) {
    const auto path = dir / (std::string(name) + ".txt");
    std::ifstream in(path);
    if (!in) continue;
    std::stringstream buf;
    buf << in.rdbuf();
    auto parsed = parse_template_file(buf.str());
    if (parsed.name != name) {
      throw Error(ErrorCode::InvalidArgument,
                  "template file " + path.string() + " declares name '" + parsed.name + "'");
    }
    t.templates_[id] = std::move(parsed);
  }
  return t;
}

const TemplateText& Templates::get(TemplateId id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) {
    throw Error(ErrorCode::InvalidArgument, "template '" + std::string(to_string(id)) + "' not loaded");
  }
  return it->second;
}

std::map<std::string, int> Templates::versions() const {
  std::map<std::string, int> out;
  for (const auto& [id, t] : templates_) out[std::string(to_string(id))] = t.version;
  return out;
}

std::string Templates::render(TemplateId id, const std::map<std::string, std::string>& values) const {
  const auto& tpl = get(id);
  std::string out;
  std::stringstream ss(tpl.body);
  std::string line;
  bool first = true;
  while (std::getline(ss, line)) {
    bool drop = false;
    for (const auto& name : placeholders_in(line)) {
      if (values.count(name)) continue;
      if (kOptionalPlaceholders.count(name)) {
        drop = true;
      } else {
        throw Error(ErrorCode::InvalidArgument, "template '" + tpl.name + "' needs a value for {" + name + "}");
      }
    }
    if (drop) continue;
    if (!first) out += '\n';
    out += substitute_line(line, values);
    first = false;
  }
  return out;
}

std::string PromptBundle::text() const {
  std::string out;
  for (const auto& p : parts) {
    if (p.kind != ContentPart::Kind::Text) continue;
    if (!out.empty()) out += '\n';
    out += p.text;
  }
  return out;
}

std::size_t PromptBundle::image_count() const {
  return static_cast<std::size_t>(std::count_if(parts.begin(), parts.end(), [](const ContentPart& p) {
    return p.kind == ContentPart::Kind::Image;
  }));
}

std::string example_targets_json(std::string_view question, ClaimType expected, const Lexicon& lexicon) {
  auto targets = extract_targets(question, expected, lexicon);
  if (targets.empty()) targets = {"..."};
  if (expected != ClaimType::Position && targets.size() > 1) targets.resize(1);
  return json(targets).dump();
}

PromptBundle build_init_prompt(const Sample& sample, const ImageData& image, ClaimType expected,
                               const std::optional<std::string>& prev_summary, const Lexicon& lexicon,
                               const Templates& templates) {
  std::map<std::string, std::string> values = {
      {"question", quoted_json_string(sample.question)},
      {"expected_claim_type", std::string(to_string(expected))},
      {"example_targets", example_targets_json(sample.question, expected, lexicon)}};
  if (prev_summary) values["prev_summary"] = quoted_json_string(*prev_summary);
  return make_bundle(TemplateId::Init, templates, std::move(values), {image});
}

PromptBundle build_yes_guard_prompt(const Sample& sample, const ImageData& image, std::string_view target_hint,
                                    const Templates& templates) {
  return make_bundle(TemplateId::YesGuard, templates,
                     {{"question", quoted_json_string(sample.question)},
                      {"target_hint", quoted_json_string(target_hint)}},
                     {image});
}

PromptBundle build_verify_prompt(std::string_view question, std::span<const Claim> claims,
                                 std::span<const EvidenceItem> evidence,
                                 const std::optional<VerificationReport>& prev_verdict, const ImageData& context,
                                 const Templates& templates) {
  if (claims.empty()) throw Error(ErrorCode::InvalidArgument, "verify prompt needs at least one claim");
  json claims_json = json::array();
  for (const auto& c : claims) {
    claims_json.push_back({{"id", c.id}, {"type", std::string(to_string(c.type))}, {"text", c.text}, {"targets", c.targets}});
  }
  json ids = json::array();
  for (const auto& e : evidence) ids.push_back(e.id);
  std::map<std::string, std::string> values = {{"question", quoted_json_string(question)},
                                               {"claims_json", claims_json.dump()},
                                               {"evidence_ids_json", ids.dump()}};
  if (prev_verdict) {
    json prev = {{"verdict", std::string(to_string(prev_verdict->verdict))}, {"checked", json::array()}};
    for (const auto& c : prev_verdict->checked) {
      prev["checked"].push_back({{"claim_id", c.claim_id},
                                 {"status", std::string(to_string(c.status))},
                                 {"confidence", c.confidence}});
    }
    values["prev_verdict_json"] = prev.dump();
  }

  PromptBundle b;
  b.template_id = TemplateId::Verify;
  b.template_version = templates.get(TemplateId::Verify).version;
  std::string text = templates.render(TemplateId::Verify, values) + "\nEvidence:";
  bool any_image = false;
  for (const auto& e : evidence) {
    if (!text.empty()) text += '\n';
    text += "[" + e.id + "] (" + std::string(to_string(e.etype)) + ") ";
    if (is_image_evidence(e.etype)) {
      if (!e.image) {
        throw Error(ErrorCode::UnknownEvidenceKind, "image evidence " + e.id + " has no image");
      }
      text += "see attached image";
      b.parts.push_back(ContentPart::text_part(std::move(text)));
      b.parts.push_back(ContentPart::image_part(e.image));
      text.clear();
      any_image = true;
    } else {
      text += e.text;
    }
  }
  if (!any_image && context) {
    if (!text.empty()) text += '\n';
    text += "[context] original image, not citable";
    b.parts.push_back(ContentPart::text_part(std::move(text)));
    b.parts.push_back(ContentPart::image_part(context));
    text.clear();
  }
  if (!text.empty()) b.parts.push_back(ContentPart::text_part(std::move(text)));
  b.substitutions = std::move(values);
  return b;
}

PromptBundle build_refine_prompt(const Sample& sample, const ImageData& image, ClaimType expected,
                                 BinaryAnswer prev_answer, const json& round_history,
                                 const json& current_round_context, const Lexicon& lexicon,
                                 const Templates& templates) {
  return make_bundle(TemplateId::Refine, templates,
                     {{"question", quoted_json_string(sample.question)},
                      {"expected_claim_type", std::string(to_string(expected))},
                      {"example_targets", example_targets_json(sample.question, expected, lexicon)},
                      {"previous_answer", std::string(to_string(prev_answer))},
                      {"round_history_json", round_history.dump()},
                      {"current_round_context_json", current_round_context.dump()}},
                     {image});
}

PromptBundle build_color_prompt(std::string_view target, const ImageData& crop, const ImageData& full,
                                const Templates& templates) {
  return make_bundle(TemplateId::ColorObserve, templates, {{"target", std::string(target)}}, {crop, full});
}

PromptBundle build_count_vision_prompt(std::string_view target, const ImageData& boxes, const Templates& templates) {
  return make_bundle(TemplateId::CountVision, templates, {{"target", std::string(target)}}, {boxes});
}

PromptBundle build_direct_prompt(const Sample& sample, const ImageData& image, const Templates& templates) {
  return make_bundle(TemplateId::DirectAnswer, templates, {{"question", quoted_json_string(sample.question)}},
                     {image});
}

// ---- parsing ----

namespace {

struct SchemaErrors {
  std::vector<std::string> fields;
  std::vector<std::string> messages;

  void add(std::string field, std::string message) {
    fields.push_back(std::move(field));
    messages.push_back(std::move(message));
  }
  bool empty() const { return fields.empty(); }
  ParseError to_error() const {
    std::string msg;
    for (std::size_t i = 0; i < messages.size(); ++i) {
      if (i) msg += "; ";
      msg += fields[i] + ": " + messages[i];
    }
    return {ErrorCode::SchemaViolation, msg, fields};
  }
};

template <class T, class Fn>
Parsed<T> parse_with(std::string_view raw, Fn&& validate) {
  Parsed<T> out;
  out.raw = std::string(raw);
  auto repaired = parse_with_repair(raw);
  out.repaired = repaired.repaired();
  out.repair_steps = repaired.steps;
  if (!repaired.value) {
    out.error = ParseError{ErrorCode::ParseFailure, repaired.error, {}};
    return out;
  }
  const json& j = *repaired.value;
  if (!j.is_object()) {
    out.error = ParseError{ErrorCode::SchemaViolation, "top level must be an object", {"$"}};
    return out;
  }
  SchemaErrors errors;
  T value = validate(j, errors);
  if (!errors.empty()) {
    out.error = errors.to_error();
  } else {
    out.value = std::move(value);
  }
  return out;
}

std::optional<std::string> string_field(const json& obj, const std::string& key, const std::string& path,
                                        SchemaErrors& errors, bool required = true) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) errors.add(path, "missing");
    return std::nullopt;
  }
  if (!it->is_string()) {
    errors.add(path, "must be a string");
    return std::nullopt;
  }
  return it->get<std::string>();
}

std::optional<Claim> claim_field(const json& j, const std::string& path, ClaimType expected, const Lexicon& lexicon,
                                 SchemaErrors& errors) {
  if (!j.is_object()) {
    errors.add(path, "claim must be an object");
    return std::nullopt;
  }
  Claim c;
  const auto before = errors.fields.size();
  if (auto id = string_field(j, "id", path + ".id", errors)) c.id = *id;
  if (auto type = string_field(j, "type", path + ".type", errors)) {
    auto t = parse_claim_type(to_lower(trim(*type)));
    if (!t) {
      errors.add(path + ".type", "unknown claim type '" + *type + "'");
    } else if (*t != expected) {
      errors.add(path + ".type", "expected '" + std::string(to_string(expected)) + "', got '" + *type + "'");
    } else {
      c.type = *t;
    }
  }
  if (auto text = string_field(j, "text", path + ".text", errors)) c.text = *text;
  auto targets = j.find("targets");
  if (targets == j.end()) {
    errors.add(path + ".targets", "missing");
  } else if (!targets->is_array() ||
             !std::all_of(targets->begin(), targets->end(), [](const json& t) { return t.is_string(); })) {
    errors.add(path + ".targets", "must be an array of strings");
  } else {
    c.targets = targets->get<std::vector<std::string>>();
  }
  if (auto p = j.find("priority"); p != j.end()) {
    if (!p->is_number_integer()) {
      errors.add(path + ".priority", "must be an integer");
    } else {
      c.priority = p->get<int>();
    }
  }
  if (errors.fields.size() != before) return std::nullopt;
  auto v = validate_claim(c, lexicon);
  for (const auto& viol : v.violations) {
    std::string field = path;
    switch (viol.code) {
      case ViolationCode::EmptyId: field += ".id"; break;
      case ViolationCode::EmptyText: field += ".text"; break;
      case ViolationCode::NonPositivePriority: field += ".priority"; break;
      default: field += ".targets"; break;
    }
    errors.add(field, std::string(to_string(viol.code)) + ": " + viol.detail);
  }
  if (!v.ok()) return std::nullopt;
  return c;
}

std::optional<BinaryAnswer> answer_field(const json& obj, const std::string& key, SchemaErrors& errors) {
  auto s = string_field(obj, key, key, errors);
  if (!s) return std::nullopt;
  auto a = parse_binary_answer(*s);
  if (!a) errors.add(key, "must be \"Yes\" or \"No\", got '" + *s + "'");
  return a;
}

}  // namespace

Parsed<InitResult> parse_init_response(std::string_view raw, ClaimType expected, const Lexicon& lexicon) {
  return parse_with<InitResult>(raw, [&](const json& j, SchemaErrors& errors) {
    InitResult r;
    if (auto a = answer_field(j, "answer", errors)) r.answer = *a;
    auto claims = j.find("verifiable_claims");
    if (claims == j.end()) {
      errors.add("verifiable_claims", "missing");
    } else if (!claims->is_array() || claims->size() != 1) {
      errors.add("verifiable_claims", "must hold exactly one claim");
    } else if (auto c = claim_field((*claims)[0], "verifiable_claims[0]", expected, lexicon, errors)) {
      r.claims.push_back(*c);
    }
    return r;
  });
}

Parsed<YesGuardResult> parse_yes_guard_response(std::string_view raw) {
  return parse_with<YesGuardResult>(raw, [](const json& j, SchemaErrors& errors) {
    YesGuardResult r;
    if (auto a = string_field(j, "answer", "answer", errors)) {
      const auto l = to_lower(trim(*a));
      if (l == "yes") r.answer = GuardAnswer::Yes;
      else if (l == "no") r.answer = GuardAnswer::No;
      else if (l == "unclear") r.answer = GuardAnswer::Unclear;
      else errors.add("answer", "must be yes|no|unclear");
    }
    if (auto c = string_field(j, "confidence", "confidence", errors)) {
      const auto l = to_lower(trim(*c));
      if (l == "high") r.confidence = GuardConfidence::High;
      else if (l == "medium") r.confidence = GuardConfidence::Medium;
      else if (l == "low") r.confidence = GuardConfidence::Low;
      else errors.add("confidence", "must be high|medium|low");
    }
    if (auto reason = string_field(j, "reason", "reason", errors)) {
      if (trim(*reason).empty()) errors.add("reason", "must not be empty");
      r.reason = *reason;
    }
    return r;
  });
}

Parsed<JudgeOutput> parse_verify_response(std::string_view raw) {
  return parse_with<JudgeOutput>(raw, [](const json& j, SchemaErrors& errors) {
    JudgeOutput r;
    if (auto v = j.find("verdict"); v != j.end() && v->is_string()) r.verdict = parse_check_status(v->get<std::string>());
    auto checked = j.find("checked");
    if (checked == j.end()) {
      errors.add("checked", "missing");
      return r;
    }
    if (!checked->is_array()) {
      errors.add("checked", "must be an array");
      return r;
    }
    for (std::size_t i = 0; i < checked->size(); ++i) {
      const auto& item = (*checked)[i];
      const std::string path = "checked[" + std::to_string(i) + "]";
      if (!item.is_object()) {
        errors.add(path, "must be an object");
        continue;
      }
      ClaimCheck c;
      if (auto id = string_field(item, "claim_id", path + ".claim_id", errors)) {
        if (trim(*id).empty()) errors.add(path + ".claim_id", "must not be empty");
        c.claim_id = trim(*id);
      }
      if (auto s = string_field(item, "status", path + ".status", errors)) {
        if (auto st = parse_check_status(*s)) {
          c.status = c.original_status = *st;
        } else {
          errors.add(path + ".status", "must be supported|contradicted|insufficient");
        }
      }
      auto conf = item.find("confidence");
      if (conf == item.end()) {
        errors.add(path + ".confidence", "missing");
      } else if (!conf->is_number()) {
        errors.add(path + ".confidence", "must be a number");
      } else {
        c.confidence = conf->get<double>();
        if (!(c.confidence >= 0.0 && c.confidence <= 1.0)) errors.add(path + ".confidence", "must be within [0,1]");
      }
      if (auto why = string_field(item, "why", path + ".why", errors, false)) c.why = *why;
      if (auto cit = item.find("citations"); cit != item.end()) {
        if (!cit->is_array() || !std::all_of(cit->begin(), cit->end(), [](const json& x) { return x.is_string(); })) {
          errors.add(path + ".citations", "must be an array of strings");
        } else {
          c.citations = cit->get<std::vector<std::string>>();
        }
      }
      r.checked.push_back(std::move(c));
    }
    return r;
  });
}

Parsed<RefineResult> parse_refine_response(std::string_view raw, ClaimType expected, const Lexicon& lexicon) {
  return parse_with<RefineResult>(raw, [&](const json& j, SchemaErrors& errors) {
    RefineResult r;
    const char* key = j.contains("Answer") ? "Answer" : "answer";
    if (auto a = answer_field(j, key, errors)) r.answer = *a;
    auto claims = j.find("new_claims");
    if (claims == j.end()) {
      errors.add("new_claims", "missing");
    } else if (!claims->is_array() || claims->size() != 1) {
      errors.add("new_claims", "must hold exactly one claim");
    } else if (auto c = claim_field((*claims)[0], "new_claims[0]", expected, lexicon, errors)) {
      r.new_claims.push_back(*c);
    }
    return r;
  });
}

AnyParsed parse_constrained_json(std::string_view raw, TemplateId schema, ClaimType expected, const Lexicon& lexicon) {
  switch (schema) {
    case TemplateId::Init: return parse_init_response(raw, expected, lexicon);
    case TemplateId::YesGuard: return parse_yes_guard_response(raw);
    case TemplateId::Verify: return parse_verify_response(raw);
    case TemplateId::Refine: return parse_refine_response(raw, expected, lexicon);
    default:
      throw Error(ErrorCode::InvalidArgument, "template '" + std::string(to_string(schema)) + "' has no JSON schema");
  }
}

namespace {

json claim_response_json(const Claim& c) {
  return {{"id", c.id},
          {"type", std::string(to_string(c.type))},
          {"text", c.text},
          {"targets", c.targets},
          {"priority", c.priority}};
}

}  // namespace

json init_result_json(const InitResult& r) {
  json claims = json::array();
  for (const auto& c : r.claims) claims.push_back(claim_response_json(c));
  return {{"answer", std::string(to_string(r.answer))}, {"verifiable_claims", claims}};
}

json yes_guard_json(const YesGuardResult& r) { return to_json(r); }

json judge_output_json(const JudgeOutput& r) {
  json checked = json::array();
  for (const auto& c : r.checked) {
    checked.push_back({{"claim_id", c.claim_id},
                       {"status", std::string(to_string(c.status))},
                       {"confidence", c.confidence},
                       {"why", c.why},
                       {"citations", c.citations}});
  }
  json j = {{"checked", checked}};
  if (r.verdict) j["verdict"] = std::string(to_string(*r.verdict));
  return j;
}

json refine_result_json(const RefineResult& r) {
  json claims = json::array();
  for (const auto& c : r.new_claims) claims.push_back(claim_response_json(c));
  return {{"new_claims", claims}, {"Answer", std::string(to_string(r.answer))}};
}

std::optional<std::string> parse_color_observation(std::string_view raw, const Lexicon& lexicon) {
  for (const auto& t : tokenize(raw)) {
    if (auto c = lexicon.canonical_color(t)) return c;
  }
  return std::nullopt;
}

std::optional<int> parse_count_reply(std::string_view raw, const Lexicon& lexicon) {
  for (const auto& t : tokenize(raw)) {
    if (auto n = lexicon.number_value(t)) return n;
  }
  return std::nullopt;
}

}  // namespace kestrel
