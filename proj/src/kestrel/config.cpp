#include "kestrel/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

#include "kestrel/error.hpp"
#include "kestrel/hashing.hpp"

namespace kestrel {

double GateConfig::gate_for(ClaimType t) const {
  auto it = gate_threshold.find(t);
  return it == gate_threshold.end() ? 1.0 : it->second;
}

bool GateConfig::textual_enabled(ClaimType t) const {
  auto it = use_textual_evidence.find(t);
  return it != use_textual_evidence.end() && it->second;
}

bool GateConfig::any_textual_enabled() const {
  return std::any_of(kAllClaimTypes.begin(), kAllClaimTypes.end(),
                     [this](ClaimType t) { return textual_enabled(t); });
}

Lexicon EngineConfig::lexicon() const {
  return Lexicon::builtin().with_extra_stop_words(extra_stop_words);
}

namespace {

enum class Kind { Int, UInt64, Double, Bool, String };

struct Field {
  std::string name;  // "section.key"
  Kind kind;
  std::function<std::string(const EngineConfig&)> get;
  // Receives the already-decoded scalar as text.
  std::function<void(EngineConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos &&
      s.find("nan") == std::string::npos) {
    s += ".0";
  }
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  out += '"';
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ", ";
    out += words[i];
  }
  return out;
}

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

template <class T>
Field int_field(std::string name, T EngineConfig::*section, int T::*member) {
  return {std::move(name), Kind::Int,
          [=](const EngineConfig& c) { return std::to_string(c.*section.*member); },
          [=](EngineConfig& c, const std::string& v) { c.*section.*member = std::stoi(v); }};
}

template <class T>
Field double_field(std::string name, T EngineConfig::*section, double T::*member) {
  return {std::move(name), Kind::Double,
          [=](const EngineConfig& c) { return fmt_double(c.*section.*member); },
          [=](EngineConfig& c, const std::string& v) { c.*section.*member = std::stod(v); }};
}

template <class T>
Field bool_field(std::string name, T EngineConfig::*section, bool T::*member) {
  return {std::move(name), Kind::Bool,
          [=](const EngineConfig& c) { return std::string(c.*section.*member ? "true" : "false"); },
          [=](EngineConfig& c, const std::string& v) { c.*section.*member = v == "true"; }};
}

template <class T>
Field string_field(std::string name, T EngineConfig::*section, std::string T::*member) {
  return {std::move(name), Kind::String,
          [=](const EngineConfig& c) { return quote(c.*section.*member); },
          [=](EngineConfig& c, const std::string& v) { c.*section.*member = v; }};
}

Field binding_field(std::string name, EndpointBinding BackendOptions::*binding,
                    std::string EndpointBinding::*member) {
  return {std::move(name), Kind::String,
          [=](const EngineConfig& c) { return quote(c.backends.*binding.*member); },
          [=](EngineConfig& c, const std::string& v) { c.backends.*binding.*member = v; }};
}

Field gate_field(ClaimType t) {
  return {"gate." + std::string(to_string(t)), Kind::Double,
          [=](const EngineConfig& c) { return fmt_double(c.gate.gate_for(t)); },
          [=](EngineConfig& c, const std::string& v) { c.gate.gate_threshold[t] = std::stod(v); }};
}

Field textual_field(ClaimType t) {
  return {"ablation.textual_" + std::string(to_string(t)), Kind::Bool,
          [=](const EngineConfig& c) { return std::string(c.gate.textual_enabled(t) ? "true" : "false"); },
          [=](EngineConfig& c, const std::string& v) { c.gate.use_textual_evidence[t] = v == "true"; }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = [] {
    using EC = EngineConfig;
    std::vector<Field> f;
    f.push_back(int_field("loop.max_rounds", &EC::gate, &GateConfig::max_rounds));
    f.push_back(int_field("loop.stable_supported_rounds", &EC::gate, &GateConfig::stable_supported_rounds));
    f.push_back(bool_field("loop.multi_claim", &EC::loop, &LoopOptions::multi_claim));
    f.push_back(int_field("loop.max_claims_per_round", &EC::loop, &LoopOptions::max_claims_per_round));
    f.push_back(bool_field("loop.evidence_escalation", &EC::loop, &LoopOptions::evidence_escalation));
    f.push_back(bool_field("loop.use_count_vision", &EC::loop, &LoopOptions::use_count_vision));
    f.push_back(int_field("loop.init_attempts", &EC::loop, &LoopOptions::init_attempts));

    f.push_back(double_field("grounding.ground_conf", &EC::gate, &GateConfig::ground_conf));
    f.push_back(double_field("grounding.ground_recheck_conf", &EC::gate, &GateConfig::ground_recheck_conf));
    f.push_back(int_field("grounding.max_instances", &EC::grounding, &GroundingOptions::max_instances));
    f.push_back(double_field("grounding.crop_margin", &EC::grounding, &GroundingOptions::crop_margin));
    f.push_back(int_field("grounding.crop_min_side", &EC::grounding, &GroundingOptions::crop_min_side));
    f.push_back({"grounding.send_image_as", Kind::String,
                 [](const EngineConfig& c) {
                   return quote(c.grounding.send_image_as_path ? "path" : "base64");
                 },
                 [](EngineConfig& c, const std::string& v) {
                   if (v != "path" && v != "base64") {
                     throw Error(ErrorCode::InvalidConfig, "expected \"base64\" or \"path\"");
                   }
                   c.grounding.send_image_as_path = v == "path";
                 }});

    for (auto t : kAllClaimTypes) f.push_back(gate_field(t));
    f.push_back(bool_field("gate.require_citations_for_flip", &EC::gate, &GateConfig::require_citations_for_flip));
    f.push_back(bool_field("gate.enable_yes_guard", &EC::gate, &GateConfig::enable_yes_guard));

    f.push_back(bool_field("ablation.use_grounding", &EC::gate, &GateConfig::use_grounding));
    for (auto t : kAllClaimTypes) f.push_back(textual_field(t));
    f.push_back(bool_field("ablation.use_claim_verification", &EC::gate, &GateConfig::use_claim_verification));
    f.push_back(bool_field("ablation.use_gating", &EC::gate, &GateConfig::use_gating));
    f.push_back(bool_field("ablation.use_self_refinement", &EC::gate, &GateConfig::use_self_refinement));
    f.push_back(bool_field("ablation.use_history", &EC::gate, &GateConfig::use_history));
    f.push_back(bool_field("ablation.use_seg_overlay", &EC::grounding, &GroundingOptions::use_seg_overlay));
    f.push_back(bool_field("ablation.use_bbox_render", &EC::grounding, &GroundingOptions::use_bbox_render));
    f.push_back(bool_field("ablation.use_crop_zoom", &EC::grounding, &GroundingOptions::use_crop_zoom));

    f.push_back(binding_field("backends.initializer", &BackendOptions::initializer, &EndpointBinding::endpoint));
    f.push_back(binding_field("backends.judge", &BackendOptions::judge, &EndpointBinding::endpoint));
    f.push_back(binding_field("backends.refiner", &BackendOptions::refiner, &EndpointBinding::endpoint));
    f.push_back(binding_field("backends.color_observer", &BackendOptions::color_observer, &EndpointBinding::endpoint));
    f.push_back(binding_field("backends.grounder", &BackendOptions::grounder, &EndpointBinding::endpoint));
    f.push_back(string_field("backends.chat_path", &EC::backends, &BackendOptions::chat_path));
    f.push_back(string_field("backends.segment_path", &EC::backends, &BackendOptions::segment_path));
    f.push_back(int_field("backends.timeout_ms", &EC::backends, &BackendOptions::timeout_ms));
    f.push_back(int_field("backends.max_retries", &EC::backends, &BackendOptions::max_retries));
    f.push_back(int_field("backends.backoff_ms", &EC::backends, &BackendOptions::backoff_ms));
    f.push_back(int_field("backends.max_in_flight", &EC::backends, &BackendOptions::max_in_flight));
    f.push_back(double_field("backends.temperature", &EC::backends, &BackendOptions::temperature));
    f.push_back(int_field("backends.max_tokens", &EC::backends, &BackendOptions::max_tokens));
    f.push_back(string_field("backends.image_part_style", &EC::backends, &BackendOptions::image_part_style));
    f.push_back(string_field("backends.api_key_env", &EC::backends, &BackendOptions::api_key_env));

    f.push_back(binding_field("models.initializer", &BackendOptions::initializer, &EndpointBinding::model));
    f.push_back(binding_field("models.judge", &BackendOptions::judge, &EndpointBinding::model));
    f.push_back(binding_field("models.refiner", &BackendOptions::refiner, &EndpointBinding::model));
    f.push_back(binding_field("models.color_observer", &BackendOptions::color_observer, &EndpointBinding::model));
    f.push_back(binding_field("models.grounder", &BackendOptions::grounder, &EndpointBinding::model));

    f.push_back(int_field("run.workers", &EC::run, &RunOptions::workers));
    f.push_back({"run.seed", Kind::UInt64,
                 [](const EngineConfig& c) { return std::to_string(c.run.seed); },
                 [](EngineConfig& c, const std::string& v) { c.run.seed = std::stoull(v); }});
    f.push_back(bool_field("run.record", &EC::run, &RunOptions::record));
    f.push_back(string_field("run.templates_dir", &EC::run, &RunOptions::templates_dir));

    f.push_back(string_field("synthetic.difficulty", &EC::synthetic, &SyntheticOptions::difficulty));
    f.push_back(int_field("synthetic.canvas_width", &EC::synthetic, &SyntheticOptions::canvas_width));
    f.push_back(int_field("synthetic.canvas_height", &EC::synthetic, &SyntheticOptions::canvas_height));
    f.push_back(double_field("synthetic.init_wrong_rate", &EC::synthetic, &SyntheticOptions::init_wrong_rate));
    f.push_back(string_field("synthetic.judge_mode", &EC::synthetic, &SyntheticOptions::judge_mode));
    f.push_back(double_field("synthetic.judge_noise", &EC::synthetic, &SyntheticOptions::judge_noise));
    f.push_back(double_field("synthetic.judge_noise_conf_min", &EC::synthetic, &SyntheticOptions::judge_noise_conf_min));
    f.push_back(double_field("synthetic.judge_noise_conf_max", &EC::synthetic, &SyntheticOptions::judge_noise_conf_max));
    f.push_back(double_field("synthetic.miss_rate", &EC::synthetic, &SyntheticOptions::miss_rate));
    f.push_back(double_field("synthetic.hallucinate_rate", &EC::synthetic, &SyntheticOptions::hallucinate_rate));
    f.push_back(double_field("synthetic.score_jitter", &EC::synthetic, &SyntheticOptions::score_jitter));

    f.push_back({"lexicon.extra_stop_words", Kind::String,
                 [](const EngineConfig& c) { return quote(join_words(c.extra_stop_words)); },
                 [](EngineConfig& c, const std::string& v) { c.extra_stop_words = split_words(v); }});
    return f;
  }();
  return kFields;
}

const Field* find_field(std::string_view name) {
  for (const auto& f : fields()) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

// Decodes one value token into canonical scalar text for the field kind.
// Returns an error message on failure.
std::optional<std::string> decode_value(const Field& field, std::string_view raw, std::string& out) {
  std::string v = trim(raw);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    std::string s;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        ++i;
        s += v[i] == 'n' ? '\n' : v[i];
      } else {
        s += v[i];
      }
    }
    if (field.kind != Kind::String) return "expected a " + std::string(field.kind == Kind::Bool ? "boolean" : "number") + ", got a string";
    out = s;
    return std::nullopt;
  }
  switch (field.kind) {
    case Kind::String:
      out = v;  // bare word
      return std::nullopt;
    case Kind::Bool: {
      const auto l = to_lower(v);
      if (l == "true" || l == "on" || l == "1" || l == "yes") {
        out = "true";
      } else if (l == "false" || l == "off" || l == "0" || l == "no") {
        out = "false";
      } else {
        return "expected true/false, got '" + v + "'";
      }
      return std::nullopt;
    }
    case Kind::Int: {
      int x = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size()) return "expected an integer, got '" + v + "'";
      out = std::to_string(x);
      return std::nullopt;
    }
    case Kind::UInt64: {
      unsigned long long x = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size()) return "expected a non-negative integer, got '" + v + "'";
      out = std::to_string(x);
      return std::nullopt;
    }
    case Kind::Double: {
      double x = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
      if (ec != std::errc() || p != v.data() + v.size()) return "expected a number, got '" + v + "'";
      out = v;
      return std::nullopt;
    }
  }
  return "unsupported value";
}

std::string strip_comment(std::string_view line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && in_str) {
      ++i;
      continue;
    }
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.name);
  out.push_back("ablation.use_textual_evidence");
  return out;
}

std::optional<ConfigDiagnostic> set_config_value(EngineConfig& config, std::string_view key,
                                                 std::string_view value) {
  if (key == "ablation.use_textual_evidence") {
    for (auto t : kAllClaimTypes) {
      auto d = set_config_value(config, "ablation.textual_" + std::string(to_string(t)), value);
      if (d) return ConfigDiagnostic{std::string(key), d->message};
    }
    return std::nullopt;
  }
  const Field* field = find_field(key);
  if (!field) return ConfigDiagnostic{std::string(key), "unknown key"};
  std::string decoded;
  if (auto err = decode_value(*field, value, decoded)) return ConfigDiagnostic{std::string(key), *err};
  try {
    field->set(config, decoded);
  } catch (const std::exception& e) {
    return ConfigDiagnostic{std::string(key), e.what()};
  }
  return std::nullopt;
}

ConfigParseResult parse_config(std::string_view text, EngineConfig base) {
  ConfigParseResult result{std::move(base), {}};
  std::string section;
  std::size_t line_no = 0;
  std::stringstream ss{std::string(text)};
  std::string raw;
  while (std::getline(ss, raw)) {
    ++line_no;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        result.diagnostics.push_back({"line " + std::to_string(line_no), "malformed section header"});
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      result.diagnostics.push_back({"line " + std::to_string(line_no), "expected 'key = value'"});
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    const auto full = section.empty() ? key : section + "." + key;
    if (auto d = set_config_value(result.config, full, line.substr(eq + 1))) {
      d->message += " (line " + std::to_string(line_no) + ")";
      result.diagnostics.push_back(*d);
    }
  }
  for (auto& d : validate_config(result.config)) result.diagnostics.push_back(std::move(d));
  return result;
}

ConfigParseResult load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ConfigParseResult r;
    r.diagnostics.push_back({"file", "cannot open config file '" + path + "'"});
    return r;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const EngineConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.name.find('.');
    const auto sec = f.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += f.name.substr(dot + 1) + " = " + f.get(config) + "\n";
  }
  return out;
}

std::vector<ConfigDiagnostic> apply_env_overrides(EngineConfig& config, const char* const* envp) {
  std::vector<ConfigDiagnostic> out;
  if (!envp) return out;
  constexpr std::string_view kPrefix = "KESTREL_";
  for (auto* p = envp; *p; ++p) {
    std::string_view entry(*p);
    if (entry.substr(0, kPrefix.size()) != kPrefix) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    const auto name = entry.substr(kPrefix.size(), eq - kPrefix.size());
    const auto sep = name.find("__");
    if (sep == std::string_view::npos) continue;  // e.g. KESTREL_API_KEY
    const auto key = to_lower(name.substr(0, sep)) + "." + to_lower(name.substr(sep + 2));
    if (auto d = set_config_value(config, key, entry.substr(eq + 1))) {
      d->field = std::string(entry.substr(0, eq));
      out.push_back(*d);
    }
  }
  return out;
}

std::vector<ConfigDiagnostic> validate_config(const EngineConfig& c) {
  std::vector<ConfigDiagnostic> d;
  auto unit = [&](const std::string& field, double v) {
    if (!(v >= 0.0 && v <= 1.0)) d.push_back({field, "must be within [0, 1]"});
  };
  const auto& g = c.gate;
  if (g.max_rounds < 1) d.push_back({"loop.max_rounds", "must be >= 1"});
  if (g.stable_supported_rounds < 1) d.push_back({"loop.stable_supported_rounds", "must be >= 1"});
  if (c.loop.max_claims_per_round < 1) d.push_back({"loop.max_claims_per_round", "must be >= 1"});
  if (c.loop.init_attempts < 1) d.push_back({"loop.init_attempts", "must be >= 1"});
  unit("grounding.ground_conf", g.ground_conf);
  unit("grounding.ground_recheck_conf", g.ground_recheck_conf);
  if (g.ground_recheck_conf > g.ground_conf) {
    d.push_back({"grounding.ground_recheck_conf", "must not exceed grounding.ground_conf"});
  }
  for (auto t : kAllClaimTypes) unit("gate." + std::string(to_string(t)), g.gate_for(t));
  if (c.grounding.max_instances < 1) d.push_back({"grounding.max_instances", "must be >= 1"});
  if (!(c.grounding.crop_margin >= 0.0)) d.push_back({"grounding.crop_margin", "must be >= 0"});
  if (c.grounding.crop_min_side < 1) d.push_back({"grounding.crop_min_side", "must be >= 1"});
  if (c.backends.timeout_ms < 1) d.push_back({"backends.timeout_ms", "must be >= 1"});
  if (c.backends.max_retries < 0) d.push_back({"backends.max_retries", "must be >= 0"});
  if (c.backends.backoff_ms < 0) d.push_back({"backends.backoff_ms", "must be >= 0"});
  if (c.backends.max_in_flight < 1) d.push_back({"backends.max_in_flight", "must be >= 1"});
  if (!(c.backends.temperature >= 0.0)) d.push_back({"backends.temperature", "must be >= 0"});
  if (c.backends.max_tokens < 1) d.push_back({"backends.max_tokens", "must be >= 1"});
  if (c.backends.image_part_style != "image_url" && c.backends.image_part_style != "image") {
    d.push_back({"backends.image_part_style", "must be \"image_url\" or \"image\""});
  }
  for (const auto& [name, b] : {std::pair{"backends.initializer", &c.backends.initializer},
                                {"backends.judge", &c.backends.judge},
                                {"backends.refiner", &c.backends.refiner},
                                {"backends.color_observer", &c.backends.color_observer},
                                {"backends.grounder", &c.backends.grounder}}) {
    const auto& e = b->endpoint;
    if (e != "synthetic" && e != "none" && e.rfind("http://", 0) != 0 && e.rfind("https://", 0) != 0) {
      d.push_back({name, "must be an http(s) URL, \"synthetic\" or \"none\""});
    }
  }
  if (c.run.workers < 1) d.push_back({"run.workers", "must be >= 1"});
  const auto& s = c.synthetic;
  if (s.difficulty != "random" && s.difficulty != "popular" && s.difficulty != "adversarial") {
    d.push_back({"synthetic.difficulty", "must be random, popular or adversarial"});
  }
  if (s.judge_mode != "oracle" && s.judge_mode != "always_supported" &&
      s.judge_mode != "always_insufficient") {
    d.push_back({"synthetic.judge_mode", "must be oracle, always_supported or always_insufficient"});
  }
  if (s.canvas_width < 64 || s.canvas_height < 64) {
    d.push_back({"synthetic.canvas_width", "canvas must be at least 64x64"});
  }
  unit("synthetic.init_wrong_rate", s.init_wrong_rate);
  unit("synthetic.judge_noise", s.judge_noise);
  unit("synthetic.judge_noise_conf_min", s.judge_noise_conf_min);
  unit("synthetic.judge_noise_conf_max", s.judge_noise_conf_max);
  if (s.judge_noise_conf_min > s.judge_noise_conf_max) {
    d.push_back({"synthetic.judge_noise_conf_min", "must not exceed synthetic.judge_noise_conf_max"});
  }
  unit("synthetic.miss_rate", s.miss_rate);
  unit("synthetic.hallucinate_rate", s.hallucinate_rate);
  if (!(s.score_jitter >= 0.0 && s.score_jitter <= 0.5)) {
    d.push_back({"synthetic.score_jitter", "must be within [0, 0.5]"});
  }
  return d;
}

std::string config_hash(const EngineConfig& config) { return sha256_hex(serialize_config(config)); }

}  // namespace kestrel
