// Command-line front-end. Talks to the engine only through the C API.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kestrel/kestrel.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

struct CString {
  char* p = nullptr;
  ~CString() { kestrel_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct ConfigHandle {
  kestrel_config* p = nullptr;
  ~ConfigHandle() { kestrel_config_free(p); }
};

int report_failure(kestrel_status s, const std::string& what) {
  std::cerr << "kestrel: " << what << ": " << kestrel_status_name(s) << ": " << kestrel_last_error() << "\n";
  return s == KESTREL_E_INVALID_CONFIG ? kExitConfig : kExitFailure;
}

void print_diagnostics(const CString& diags) {
  if (!diags.p) return;
  auto j = json::parse(diags.str(), nullptr, false);
  if (!j.is_array()) return;
  for (const auto& d : j) std::cerr << "  " << d.value("field", "?") << ": " << d.value("message", "") << "\n";
}

std::vector<std::pair<std::string, std::string>> split_pairs(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      const auto eq = part.find('=');
      if (eq == std::string::npos) throw CLI::ValidationError("expected name=value, got '" + part + "'");
      out.emplace_back(part.substr(0, eq), part.substr(eq + 1));
    }
  }
  return out;
}

/// Shared flags; applied after the config file and the environment.
struct Common {
  std::string config_path;
  std::vector<std::string> set;
  std::optional<int> max_rounds;
  std::vector<std::string> gate;
  std::vector<std::string> endpoint;
  std::vector<std::string> model;
  std::vector<std::string> ablate;
  std::optional<unsigned long long> seed;
  std::optional<int> workers;
  std::string out = "kestrel-out";
  bool as_json = false;

  /// Builds the config; returns an exit code on failure.
  std::optional<int> build(ConfigHandle& cfg) const {
    kestrel_config_new(&cfg.p);
    if (!config_path.empty()) {
      CString diags;
      if (auto s = kestrel_config_load(cfg.p, config_path.c_str(), &diags.p); s != KESTREL_OK) {
        int rc = report_failure(s, "config file " + config_path);
        print_diagnostics(diags);
        return rc;
      }
    }
    {
      CString diags;
      if (auto s = kestrel_config_apply_env(cfg.p, &diags.p); s != KESTREL_OK) {
        int rc = report_failure(s, "environment overrides");
        print_diagnostics(diags);
        return rc;
      }
    }
    std::vector<std::pair<std::string, std::string>> kv;
    try {
      for (const auto& [k, v] : split_pairs(set)) kv.emplace_back(k, v);
      if (max_rounds) kv.emplace_back("loop.max_rounds", std::to_string(*max_rounds));
      for (const auto& [k, v] : split_pairs(gate)) kv.emplace_back("gate." + k, v);
      for (const auto& [k, v] : split_pairs(endpoint)) kv.emplace_back("backends." + k, v);
      for (const auto& [k, v] : split_pairs(model)) kv.emplace_back("models." + k, v);
      for (const auto& [k, v] : split_pairs(ablate)) kv.emplace_back("ablation." + k, v);
    } catch (const CLI::ValidationError& e) {
      std::cerr << "kestrel: " << e.what() << "\n";
      return kExitConfig;
    }
    if (seed) kv.emplace_back("run.seed", std::to_string(*seed));
    if (workers) kv.emplace_back("run.workers", std::to_string(*workers));
    for (const auto& [k, v] : kv) {
      if (auto s = kestrel_config_set(cfg.p, k.c_str(), v.c_str()); s != KESTREL_OK) {
        return report_failure(s, "--" + k);
      }
    }
    CString diags;
    if (auto s = kestrel_config_validate(cfg.p, &diags.p); s != KESTREL_OK) {
      std::cerr << "kestrel: invalid configuration\n";
      print_diagnostics(diags);
      return kExitConfig;
    }
    return std::nullopt;
  }
};

/// Prints a JSON result: its "table" for humans, or the whole object with --json.
int emit(kestrel_status s, const CString& out, const std::string& what, bool as_json) {
  if (s != KESTREL_OK) return report_failure(s, what);
  auto j = json::parse(out.str(), nullptr, false);
  if (as_json || j.is_discarded() || !j.is_object() || !j.contains("table")) {
    std::cout << (j.is_discarded() ? out.str() : j.dump(2)) << "\n";
  } else {
    std::cout << j.at("table").get<std::string>();
  }
  return kExitOk;
}

std::string keys_reference() {
  CString keys;
  kestrel_config_keys(&keys.p);
  auto j = json::parse(keys.str(), nullptr, false);
  std::string out = "Config keys (file sections as [section], env KESTREL_<SECTION>__<KEY>):\n";
  if (j.is_array()) {
    for (const auto& k : j) out += "  " + k.get<std::string>() + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Claim-level verification and evidence-gated refinement for yes/no visual questions"};
  app.set_version_flag("--version", kestrel_version());
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(keys_reference());

  Common c;
  app.add_option("--config", c.config_path, "Config file")->check(CLI::ExistingFile);
  app.add_option("--set", c.set, "Config override key=value (repeatable, comma separated)");
  app.add_option("--max-rounds", c.max_rounds, "Refinement rounds");
  app.add_option("--gate", c.gate, "Gate thresholds, e.g. existence=0.82,position=0.95");
  app.add_option("--endpoint", c.endpoint, "Role endpoint, e.g. judge=http://host:8000 (or none, synthetic)");
  app.add_option("--model", c.model, "Role model name, e.g. judge=qwen3-vl");
  app.add_option("--ablate", c.ablate, "Ablation switch, e.g. use_grounding=off");
  app.add_option("--seed", c.seed, "Run seed");
  app.add_option("--workers", c.workers, "Sample-level parallelism");
  app.add_option("--out", c.out, "Output directory")->capture_default_str();
  app.add_flag("--json", c.as_json, "Machine-readable output");

  // run
  auto* run = app.add_subcommand("run", "Run the pipeline over a dataset or one image");
  std::string dataset, data, data_dir, images, subset, source = "coco", split = "random", image, question;
  run->add_option("--dataset", dataset, "pope, mme or mme-tsv");
  run->add_option("--data", data, "Dataset file");
  run->add_option("--data-dir", data_dir, "Directory holding <source>_pope_<split>.json files");
  run->add_option("--source", source, "POPE source (coco, aokvqa, gqa)")->capture_default_str();
  run->add_option("--split", split, "POPE split (random, popular, adversarial)")->capture_default_str();
  run->add_option("--images", images, "Image root directory");
  run->add_option("--subset", subset, "MME subset for mme-tsv");
  run->add_option("--image", image, "Single image path");
  run->add_option("--question", question, "Single yes/no question");

  // eval
  auto* eval = app.add_subcommand("eval", "Score traces against labels");
  eval->require_subcommand(1);
  std::string traces, labels;
  auto* pope = eval->add_subcommand("pope", "POPE accuracy");
  auto* mme = eval->add_subcommand("mme", "MME subset scores");
  for (auto* sc : {pope, mme}) {
    sc->add_option("--traces", traces, "Trace file")->required();
    sc->add_option("--labels", labels, "Labels file (labels.jsonl of a run)")->required();
  }

  auto* transitions = app.add_subcommand("transitions", "Initial-to-final answer transitions");
  transitions->add_option("--traces", traces, "Trace file")->required();
  transitions->add_option("--labels", labels, "Labels file")->required();

  auto* efficiency = app.add_subcommand("efficiency", "Per-round latency and checked cases");
  efficiency->add_option("--traces", traces, "Trace file")->required();

  auto* render = app.add_subcommand("render-trace", "Human-readable trace dump");
  std::string sample;
  render->add_option("traces", traces, "Trace file")->required();
  render->add_option("--sample", sample, "Only this sample id");

  auto* replay = app.add_subcommand("replay", "Re-gate recorded traces, or re-run from recorded responses");
  std::string responses;
  replay->add_option("traces", traces, "Trace file")->required();
  replay->add_option("--responses", responses, "Recorded responses (responses.jsonl)");

  auto* simulate = app.add_subcommand("simulate", "Synthetic-scene batch");
  int scenes = 100;
  std::optional<double> judge_noise, init_wrong, miss, hallucinate, jitter;
  std::string judge_mode, difficulty;
  simulate->add_option("--scenes", scenes, "Number of scenes (4 questions each)")->capture_default_str();
  simulate->add_option("--judge-noise", judge_noise, "Probability of a flipped judge verdict");
  simulate->add_option("--judge-mode", judge_mode, "oracle, always_supported or always_insufficient");
  simulate->add_option("--init-wrong-rate", init_wrong, "Probability of a wrong initial answer");
  simulate->add_option("--miss-rate", miss, "Grounder miss probability per instance");
  simulate->add_option("--hallucinate-rate", hallucinate, "Grounder spurious-instance probability");
  simulate->add_option("--score-jitter", jitter, "Grounder score jitter");
  simulate->add_option("--difficulty", difficulty, "random, popular or adversarial");

  auto* validate = app.add_subcommand("validate-config", "Check the configuration and print it");

  auto* make_labels = app.add_subcommand("labels", "Write a labels file from a dataset");
  make_labels->add_option("--dataset", dataset, "pope, mme or mme-tsv")->required();
  make_labels->add_option("--data", data, "Dataset file")->required();
  make_labels->add_option("--subset", subset, "MME subset for mme-tsv");

  CLI11_PARSE(app, argc, argv);

  if (*simulate) {
    auto add = [&](const char* key, const std::optional<double>& v) {
      if (v) c.set.push_back(std::string(key) + "=" + std::to_string(*v));
    };
    add("synthetic.judge_noise", judge_noise);
    add("synthetic.init_wrong_rate", init_wrong);
    add("synthetic.miss_rate", miss);
    add("synthetic.hallucinate_rate", hallucinate);
    add("synthetic.score_jitter", jitter);
    if (!judge_mode.empty()) c.set.push_back("synthetic.judge_mode=" + judge_mode);
    if (!difficulty.empty()) c.set.push_back("synthetic.difficulty=" + difficulty);
  }

  // Commands that need no engine config.
  if (*pope || *mme) {
    CString out;
    auto s = *pope ? kestrel_eval_pope(traces.c_str(), labels.c_str(), &out.p)
                   : kestrel_eval_mme(traces.c_str(), labels.c_str(), &out.p);
    return emit(s, out, "eval", c.as_json);
  }
  if (*transitions) {
    CString out;
    return emit(kestrel_transitions(traces.c_str(), labels.c_str(), &out.p), out, "transitions", c.as_json);
  }
  if (*efficiency) {
    CString out;
    return emit(kestrel_efficiency(traces.c_str(), c.max_rounds.value_or(0), &out.p), out, "efficiency", c.as_json);
  }
  if (*render) {
    CString out;
    auto s = kestrel_render_trace(traces.c_str(), sample.empty() ? nullptr : sample.c_str(), &out.p);
    if (s != KESTREL_OK) return report_failure(s, "render-trace");
    std::cout << out.str();
    return kExitOk;
  }
  if (*make_labels) {
    auto s = kestrel_dataset_labels(dataset.c_str(), data.c_str(), subset.c_str(), c.out.c_str());
    if (s != KESTREL_OK) return report_failure(s, "labels");
    std::cout << "wrote " << c.out << "\n";
    return kExitOk;
  }

  ConfigHandle cfg;
  if (auto rc = c.build(cfg)) return *rc;

  if (*validate) {
    CString text;
    kestrel_config_serialize(cfg.p, &text.p);
    std::cout << text.str();
    return kExitOk;
  }
  if (*simulate) {
    CString out;
    auto s = kestrel_simulate(cfg.p, scenes, c.out.c_str(), &out.p);
    if (s != KESTREL_OK) return report_failure(s, "simulate");
    auto j = json::parse(out.str());
    if (c.as_json) {
      std::cout << j.dump(2) << "\n";
    } else {
      const auto& t = j.at("transitions");
      std::cout << "simulated " << j.at("samples") << " questions over " << scenes << " scenes: accuracy "
                << j.at("accuracy").get<std::string>() << "% (initial " << j.at("initial_accuracy").get<std::string>()
                << "%), corrected " << t.at("error_corrected") << ", over-corrected " << t.at("over_corrected")
                << ", early errors " << j.at("early_errors") << "; traces in " << j.at("traces").get<std::string>()
                << "\n";
    }
    return kExitOk;
  }
  if (*replay) {
    CString out;
    auto s = kestrel_replay(cfg.p, traces.c_str(), responses.empty() ? nullptr : responses.c_str(), c.out.c_str(),
                            &out.p);
    if (s != KESTREL_OK) return report_failure(s, "replay");
    auto j = json::parse(out.str());
    if (c.as_json) {
      std::cout << j.dump(2) << "\n";
    } else if (j.at("mode") == "regate") {
      for (const auto& r : j.at("results")) {
        std::cout << r.at("sample_id").get<std::string>() << "  recorded " << r.at("recorded").get<std::string>()
                  << "  regated " << r.at("regated").get<std::string>() << "\n";
      }
      std::cout << j.at("changed") << " of " << j.at("samples") << " answers changed; flips " << j.at("recorded_flips")
                << " -> " << j.at("regated_flips") << "\n";
    } else {
      std::cout << "replayed " << j.at("samples") << " samples: " << j.at("identical") << " identical\n";
    }
    return kExitOk;
  }
  if (*run) {
    CString out;
    kestrel_status s;
    if (!image.empty() || !question.empty()) {
      if (image.empty() || question.empty()) {
        std::cerr << "kestrel: --image and --question go together\n";
        return kExitFailure;
      }
      s = kestrel_run_single(cfg.p, image.c_str(), question.c_str(), c.out.c_str(), &out.p);
      if (s != KESTREL_OK) return report_failure(s, "run");
      auto j = json::parse(out.str());
      std::cout << (c.as_json ? j.dump(2) : "answer " + j.at("final_answer").get<std::string>() + " (" +
                                                 j.value("stop_reason", std::string("none")) + ")")
                << "\n";
      return kExitOk;
    }
    if (dataset.empty()) {
      std::cerr << "kestrel: run needs --dataset or --image/--question\n";
      return kExitFailure;
    }
    if (data.empty() && dataset == "pope" && !data_dir.empty()) {
      data = data_dir + "/" + source + "_pope_" + split + ".json";
    }
    s = kestrel_run_dataset(cfg.p, dataset.c_str(), data.c_str(), images.c_str(), subset.c_str(), c.out.c_str(),
                            &out.p);
    if (s != KESTREL_OK) return report_failure(s, "run");
    auto j = json::parse(out.str());
    if (c.as_json) {
      std::cout << j.dump(2) << "\n";
    } else {
      std::cout << "ran " << j.at("samples") << " samples (" << j.at("early_errors") << " early errors); traces in "
                << j.at("traces").get<std::string>() << "\n";
    }
    return kExitOk;
  }
  return kExitFailure;
}
