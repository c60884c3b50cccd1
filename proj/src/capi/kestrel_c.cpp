#include "kestrel/kestrel.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kestrel/bench.hpp"
#include "kestrel/config.hpp"
#include "kestrel/error.hpp"
#include "kestrel/refine.hpp"
#include "kestrel/runner.hpp"
#include "kestrel/trace.hpp"

extern char** environ;

struct kestrel_config {
  kestrel::EngineConfig config;
};

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kestrel;

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

kestrel_status status_of(ErrorCode code) { return static_cast<kestrel_status>(static_cast<int>(code) + 1); }

template <class F>
kestrel_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return KESTREL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return KESTREL_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

json diagnostics_json(const std::vector<ConfigDiagnostic>& diags) {
  json out = json::array();
  for (const auto& d : diags) out.push_back({{"field", d.field}, {"message", d.message}});
  return out;
}

std::string diagnostics_text(const std::vector<ConfigDiagnostic>& diags) {
  std::string out;
  for (const auto& d : diags) out += (out.empty() ? "" : "; ") + d.field + ": " + d.message;
  return out;
}

void check_config(const EngineConfig& config) {
  auto diags = validate_config(config);
  if (!diags.empty()) throw Error(ErrorCode::InvalidConfig, diagnostics_text(diags));
}

Templates templates_for(const EngineConfig& config) {
  if (config.run.templates_dir.empty()) return Templates::builtin();
  return Templates::from_directory(config.run.templates_dir);
}

struct RunFiles {
  fs::path dir;
  fs::path traces() const { return dir / "traces.jsonl"; }
  fs::path artifacts() const { return dir / "artifacts"; }
  fs::path manifest() const { return dir / "manifest.json"; }
  fs::path responses() const { return dir / "responses.jsonl"; }
  fs::path labels() const { return dir / "labels.jsonl"; }
};

RunFiles prepare_out(const char* out_dir) {
  require(out_dir, "out_dir");
  RunFiles f{out_dir};
  fs::create_directories(f.dir);
  std::error_code ec;
  fs::remove(f.traces(), ec);
  return f;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, path.string() + ": " + e.what());
  }
}

json run_summary(const std::vector<RunTrace>& traces) {
  std::map<std::string, int> stops;
  int yes = 0;
  int errors = 0;
  for (const auto& t : traces) {
    stops[t.stop_reason ? std::string(to_string(*t.stop_reason)) : "none"]++;
    if (t.final_answer == BinaryAnswer::Yes) ++yes;
    if (t.stop_reason == StopReason::EarlyError) ++errors;
  }
  return {{"samples", traces.size()}, {"yes", yes}, {"no", traces.size() - static_cast<std::size_t>(yes)},
          {"early_errors", errors}, {"stop_reasons", stops}};
}

std::vector<LabeledSample> dataset_samples(const std::string& kind, const fs::path& data, const fs::path& images,
                                           const std::string& subset) {
  if (kind == "pope") return bench::pope_samples(bench::load_pope(data), images);
  if (kind == "mme") return bench::mme_samples(bench::load_mme(data), images);
  if (kind == "mme-tsv") {
    auto s = bench::parse_mme_subset(subset);
    if (!s) throw Error(ErrorCode::InvalidArgument, "mme-tsv needs a subset (existence, count, position, color)");
    return bench::mme_samples(bench::load_mme_tsv(data, *s), images);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown dataset kind '" + kind + "' (pope, mme, mme-tsv)");
}

std::vector<RunTrace> run_and_record(const EngineConfig& config, const RunFiles& files, json manifest,
                                     const std::function<std::vector<RunTrace>(const BatchOptions&)>& body) {
  auto store = config.run.record ? std::make_shared<ResponseStore>() : nullptr;
  TraceWriter writer(files.traces(), files.artifacts());
  BatchOptions opts;
  opts.workers = config.run.workers;
  opts.writer = &writer;
  opts.record = store;
  write_json(files.manifest(), manifest);
  auto traces = body(opts);
  if (store) store->save_jsonl(files.responses());
  return traces;
}

const RunTrace* find_trace(const std::vector<RunTrace>& traces, const std::string& id) {
  for (const auto& t : traces) {
    if (t.sample_id == id) return &t;
  }
  return nullptr;
}

std::vector<RunTrace> load_all(const char* path) {
  require(path, "traces_path");
  auto loaded = load_traces(path);
  if (loaded.traces.empty() && !loaded.diagnostics.empty()) {
    throw Error(ErrorCode::ParseFailure, "no readable trace in " + std::string(path) + " (first problem at line " +
                                             std::to_string(loaded.diagnostics.front().line) + ")");
  }
  return std::move(loaded.traces);
}

std::string score_table(const std::map<std::string, double>& scores, const char* title) {
  std::ostringstream o;
  o << title << "\n";
  for (const auto& [k, v] : scores) o << "  " << k << std::string(k.size() < 24 ? 24 - k.size() : 1, ' ') << bench::format_score(v) << "\n";
  return o.str();
}

}  // namespace

extern "C" {

const char* kestrel_version(void) { return kestrel::kVersion; }

const char* kestrel_status_name(kestrel_status status) {
  if (status == KESTREL_OK) return "Ok";
  if (status == KESTREL_E_INTERNAL) return "Internal";
  const int code = static_cast<int>(status) - 1;
  if (code < 0 || code > static_cast<int>(ErrorCode::IoError)) return "Unknown";
  return to_string(static_cast<ErrorCode>(code)).data();
}

const char* kestrel_last_error(void) { return g_last_error.c_str(); }

void kestrel_string_free(char* s) { std::free(s); }

kestrel_status kestrel_config_new(kestrel_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new kestrel_config{};
  });
}

void kestrel_config_free(kestrel_config* config) { delete config; }

kestrel_status kestrel_config_load(kestrel_config* config, const char* path, char** diagnostics) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, std::string("cannot open config file ") + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto parsed = parse_config(ss.str(), config->config);
    if (!parsed.ok()) {
      put(diagnostics, diagnostics_json(parsed.diagnostics).dump());
      throw Error(ErrorCode::InvalidConfig, diagnostics_text(parsed.diagnostics));
    }
    config->config = parsed.config;
  });
}

kestrel_status kestrel_config_set(kestrel_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    if (auto d = set_config_value(config->config, key, value)) {
      throw Error(ErrorCode::InvalidConfig, d->field + ": " + d->message);
    }
  });
}

kestrel_status kestrel_config_apply_env(kestrel_config* config, char** diagnostics) {
  return guarded([&] {
    require(config, "config");
    auto diags = apply_env_overrides(config->config, environ);
    if (!diags.empty()) {
      put(diagnostics, diagnostics_json(diags).dump());
      throw Error(ErrorCode::InvalidConfig, diagnostics_text(diags));
    }
  });
}

kestrel_status kestrel_config_validate(const kestrel_config* config, char** diagnostics) {
  return guarded([&] {
    require(config, "config");
    auto diags = validate_config(config->config);
    put(diagnostics, diagnostics_json(diags).dump());
    if (!diags.empty()) throw Error(ErrorCode::InvalidConfig, diagnostics_text(diags));
  });
}

kestrel_status kestrel_config_serialize(const kestrel_config* config, char** text) {
  return guarded([&] {
    require(config, "config");
    require(text, "text");
    *text = dup_string(serialize_config(config->config));
  });
}

kestrel_status kestrel_config_keys(char** out) {
  return guarded([&] {
    require(out, "out");
    *out = dup_string(json(config_keys()).dump());
  });
}

kestrel_status kestrel_run_single(const kestrel_config* config, const char* image_path, const char* question,
                                  const char* out_dir, char** trace_json) {
  return guarded([&] {
    require(config, "config");
    require(image_path, "image_path");
    require(question, "question");
    const auto& cfg = config->config;
    check_config(cfg);
    const auto files = prepare_out(out_dir);
    Sample s;
    s.sample_id = "single";
    s.image = ImageRef(fs::path(image_path));
    s.question = question;
    const auto templates = templates_for(cfg);
    auto backends = live_backends(cfg);
    auto manifest = run_manifest(cfg, templates, "run", 1);
    manifest["source"] = {{"kind", "single"}, {"image", image_path}, {"question", question}};
    auto traces = run_and_record(cfg, files, manifest, [&](const BatchOptions& opts) {
      return run_batch({s}, [&](const Sample&) { return backends; }, cfg, templates, opts);
    });
    put(trace_json, to_json(traces.front()).dump());
  });
}

kestrel_status kestrel_run_dataset(const kestrel_config* config, const char* kind, const char* data_path,
                                   const char* image_root, const char* subset, const char* out_dir,
                                   char** summary_json) {
  return guarded([&] {
    require(config, "config");
    require(kind, "kind");
    require(data_path, "data_path");
    const auto& cfg = config->config;
    check_config(cfg);
    const std::string root = image_root ? image_root : "";
    const std::string sub = subset ? subset : "";
    auto samples = dataset_samples(kind, data_path, root, sub);
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, std::string("no samples in ") + data_path);
    const auto files = prepare_out(out_dir);
    const auto templates = templates_for(cfg);
    auto backends = live_backends(cfg);
    auto manifest = run_manifest(cfg, templates, "run", samples.size());
    manifest["source"] = {{"kind", "dataset"}, {"format", kind}, {"data", data_path}, {"images", root}, {"subset", sub}};
    bench::save_labels(bench::labels_of(samples), files.labels());
    auto traces = run_and_record(cfg, files, manifest, [&](const BatchOptions& opts) {
      return run_batch(unlabeled(samples), [&](const Sample&) { return backends; }, cfg, templates, opts);
    });
    auto summary = run_summary(traces);
    summary["traces"] = files.traces().string();
    put(summary_json, summary.dump());
  });
}

kestrel_status kestrel_simulate(const kestrel_config* config, int scenes, const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(config, "config");
    if (scenes <= 0) throw Error(ErrorCode::InvalidArgument, "scenes must be positive");
    const auto& cfg = config->config;
    check_config(cfg);
    const auto files = prepare_out(out_dir);
    const auto templates = templates_for(cfg);
    const auto sim = make_simulation(cfg, scenes);
    auto manifest = run_manifest(cfg, templates, "simulate", sim.samples.size());
    manifest["source"] = {{"kind", "simulate"}, {"scenes", scenes}};
    const auto labels = bench::labels_of(sim.samples);
    bench::save_labels(labels, files.labels());
    auto traces = run_and_record(cfg, files, manifest,
                                 [&](const BatchOptions& opts) { return run_simulation(sim, cfg, templates, opts); });
    auto summary = run_summary(traces);
    const auto outcomes = bench::join_outcomes(traces, labels);
    std::vector<std::pair<BinaryAnswer, BinaryAnswer>> pairs;
    std::vector<std::pair<BinaryAnswer, BinaryAnswer>> initial;
    for (const auto& o : outcomes) {
      pairs.emplace_back(o.final_answer, o.label);
      initial.emplace_back(o.initial, o.label);
    }
    summary["scenes"] = scenes;
    summary["accuracy"] = bench::format_score(bench::pope_accuracy(pairs));
    summary["initial_accuracy"] = bench::format_score(bench::pope_accuracy(initial));
    summary["transitions"] = bench::to_json(bench::transitions_of(outcomes));
    summary["traces"] = files.traces().string();
    put(summary_json, summary.dump());
  });
}

kestrel_status kestrel_replay(const kestrel_config* config, const char* traces_path, const char* responses_path,
                              const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(config, "config");
    const auto& cfg = config->config;
    check_config(cfg);
    const auto recorded = load_all(traces_path);
    const auto lexicon = cfg.lexicon();
    json summary;

    if (!responses_path) {
      json samples = json::array();
      int changed = 0;
      int recorded_flips = 0;
      int flips = 0;
      for (const auto& t : recorded) {
        const auto r = regate_trace(t, cfg.gate, lexicon);
        for (const auto& round : t.rounds) recorded_flips += round.answer_after != round.answer_before;
        flips += r.flips;
        changed += r.final_answer != t.final_answer;
        json decisions = json::array();
        for (auto d : r.decisions) decisions.push_back(std::string(to_string(d)));
        samples.push_back({{"sample_id", t.sample_id},
                           {"recorded", std::string(to_string(t.final_answer))},
                           {"regated", std::string(to_string(r.final_answer))},
                           {"flips", r.flips},
                           {"decisions", decisions},
                           {"stop_reason", r.stop_reason ? json(std::string(to_string(*r.stop_reason))) : json(nullptr)}});
      }
      summary = {{"mode", "regate"}, {"samples", recorded.size()}, {"changed", changed},
                 {"recorded_flips", recorded_flips}, {"regated_flips", flips}, {"results", samples}};
      if (out_dir) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "regate.jsonl", std::ios::trunc);
        for (const auto& s : samples) out << s.dump() << "\n";
      }
      put(summary_json, summary.dump());
      return;
    }

    const auto manifest = read_json(fs::path(traces_path).parent_path() / "manifest.json");
    const auto source = manifest.at("source");
    auto parsed = parse_config(manifest.at("config").get<std::string>());
    if (!parsed.ok()) throw Error(ErrorCode::InvalidConfig, "manifest config: " + diagnostics_text(parsed.diagnostics));
    const auto& original = parsed.config;
    std::vector<Sample> samples;
    const auto kind = source.at("kind").get<std::string>();
    if (kind == "simulate") {
      samples = unlabeled(make_simulation(original, source.at("scenes").get<int>()).samples);
    } else if (kind == "dataset") {
      samples = unlabeled(dataset_samples(source.at("format"), source.at("data").get<std::string>(),
                                          source.at("images").get<std::string>(), source.value("subset", "")));
    } else {
      Sample s;
      s.sample_id = "single";
      s.image = ImageRef(fs::path(source.at("image").get<std::string>()));
      s.question = source.at("question").get<std::string>();
      samples.push_back(std::move(s));
    }
    auto store = ResponseStore::load_jsonl(responses_path);
    const auto templates = templates_for(cfg);
    BatchOptions opts;
    opts.workers = cfg.run.workers;
    std::optional<TraceWriter> writer;
    if (out_dir) {
      const auto files = prepare_out(out_dir);
      writer.emplace(files.traces(), files.artifacts());
      opts.writer = &*writer;
    }
    const auto replayed = replay_run(samples, store, cfg, templates, opts);
    int identical = 0;
    json differing = json::array();
    for (const auto& t : replayed) {
      const auto* r = find_trace(recorded, t.sample_id);
      bool same = r && r->final_answer == t.final_answer && r->rounds.size() == t.rounds.size();
      for (std::size_t i = 0; same && i < t.rounds.size(); ++i) {
        same = r->rounds[i].gate_decision == t.rounds[i].gate_decision;
      }
      if (same) {
        ++identical;
      } else {
        differing.push_back(t.sample_id);
      }
    }
    summary = run_summary(replayed);
    summary["mode"] = "replay";
    summary["identical"] = identical;
    summary["differing"] = differing;
    put(summary_json, summary.dump());
  });
}

kestrel_status kestrel_eval_pope(const char* traces_path, const char* labels_path, char** report_json) {
  return guarded([&] {
    require(labels_path, "labels_path");
    const auto traces = load_all(traces_path);
    std::vector<std::string> unmatched;
    const auto outcomes = bench::join_outcomes(traces, bench::load_labels(labels_path), &unmatched);
    const auto table = bench::pope_table(outcomes);
    json acc = json::object();
    for (const auto& [k, v] : table) acc[k] = bench::format_score(v);
    put(report_json, json{{"accuracy", acc}, {"samples", outcomes.size()}, {"unmatched", unmatched},
                          {"table", score_table(table, "POPE accuracy (%)")}}
                         .dump());
  });
}

kestrel_status kestrel_eval_mme(const char* traces_path, const char* labels_path, char** report_json) {
  return guarded([&] {
    require(labels_path, "labels_path");
    const auto traces = load_all(traces_path);
    const auto table = bench::mme_table(traces, bench::load_labels(labels_path));
    json scores = json::object();
    for (const auto& [k, v] : table) scores[k] = bench::format_score(v);
    put(report_json, json{{"scores", scores}, {"table", score_table(table, "MME score")}}.dump());
  });
}

kestrel_status kestrel_transitions(const char* traces_path, const char* labels_path, char** report_json) {
  return guarded([&] {
    require(labels_path, "labels_path");
    const auto traces = load_all(traces_path);
    const auto outcomes = bench::join_outcomes(traces, bench::load_labels(labels_path));
    if (outcomes.empty()) throw Error(ErrorCode::EmptyInput, "no labeled traces");
    const auto t = bench::transitions_of(outcomes);
    auto j = bench::to_json(t);
    j["table"] = bench::format_table(t);
    put(report_json, j.dump());
  });
}

kestrel_status kestrel_efficiency(const char* traces_path, int max_rounds, char** report_json) {
  return guarded([&] {
    const auto traces = load_all(traces_path);
    if (traces.empty()) throw Error(ErrorCode::EmptyInput, "no traces");
    const auto r = bench::efficiency_report(traces, max_rounds);
    auto j = bench::to_json(r);
    j["table"] = bench::format_table(r);
    put(report_json, j.dump());
  });
}

kestrel_status kestrel_dataset_labels(const char* kind, const char* data_path, const char* subset,
                                      const char* out_path) {
  return guarded([&] {
    require(kind, "kind");
    require(data_path, "data_path");
    require(out_path, "out_path");
    bench::save_labels(bench::labels_of(dataset_samples(kind, data_path, "", subset ? subset : "")), out_path);
  });
}

kestrel_status kestrel_render_trace(const char* traces_path, const char* sample_id, char** text) {
  return guarded([&] {
    require(text, "text");
    const auto traces = load_all(traces_path);
    std::string out;
    for (const auto& t : traces) {
      if (sample_id && t.sample_id != sample_id) continue;
      out += (out.empty() ? "" : "\n----\n") + render_trace(t);
    }
    if (out.empty()) {
      throw Error(ErrorCode::InvalidArgument,
                  sample_id ? "no trace for sample " + std::string(sample_id) : std::string("no traces"));
    }
    *text = dup_string(out);
  });
}

}  // extern "C"
