// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Oracles here are written independently of the engine code they check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <rapidjson/document.h>
#include <rapidjson/error/en.h>

#include "kestrel/bench.hpp"
#include "kestrel/error.hpp"
#include "kestrel/geometry.hpp"
#include "kestrel/grounding.hpp"
#include "kestrel/json_repair.hpp"
#include "kestrel/mask.hpp"
#include "kestrel/prompt.hpp"
#include "kestrel/refine.hpp"
#include "kestrel/runner.hpp"
#include "kestrel/verification.hpp"

namespace {

using namespace kestrel;
using Clock = std::chrono::steady_clock;

// Pinned limits.
constexpr double kConsolidationBudgetS = 5.0;
constexpr double kGateSoundnessBudgetS = 60.0;
constexpr double kEndToEndBudgetS = 120.0;
constexpr double kGeometryBudgetS = 5.0;
constexpr double kMinEndToEndAccuracy = 98.0;
constexpr double kMinCorrectedShare = 0.95;
constexpr int kSoundnessScenes = 500;
constexpr int kEndToEndScenes = 500;
constexpr int kGeometryCases = 10000;
constexpr int kFuzzCases = 1000;
constexpr std::size_t kReplaySamples = 50;
constexpr std::size_t kMonotonicCorpus = 200;

struct Result {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

EngineConfig synthetic_config() {
  EngineConfig c;
  c.run.workers = 2;
  c.run.seed = 20241015;
  return c;
}

struct SimRun {
  Simulation sim;
  std::vector<RunTrace> traces;
  std::vector<bench::Outcome> outcomes;
};

SimRun simulate(const EngineConfig& config, int scenes, std::shared_ptr<ResponseStore> record = nullptr) {
  SimRun run;
  run.sim = make_simulation(config, scenes);
  BatchOptions opts;
  opts.workers = config.run.workers;
  opts.record = std::move(record);
  run.traces = run_simulation(run.sim, config, Templates::builtin(), opts);
  run.outcomes = bench::join_outcomes(run.traces, bench::labels_of(run.sim.samples));
  return run;
}

// ---- 1. consolidation ----

// Verdict rule restated from its contract.
CheckStatus oracle_verdict(const std::vector<ClaimCheck>& checks, const GateConfig& g,
                           const std::map<std::string, ClaimType>& types) {
  auto confident = [&](const ClaimCheck& c) {
    auto it = types.find(c.claim_id);
    if (it == types.end()) return false;
    return c.confidence >= g.gate_threshold.at(it->second);
  };
  for (const auto& c : checks) {
    if (c.status == CheckStatus::Contradicted && confident(c) &&
        (!g.require_citations_for_flip || !c.citations.empty())) {
      return CheckStatus::Contradicted;
    }
  }
  for (const auto& c : checks) {
    if (c.status != CheckStatus::Supported || !confident(c)) return CheckStatus::Insufficient;
  }
  return CheckStatus::Supported;
}

Result check_consolidation() {
  const auto t0 = Clock::now();
  // Per check: status x confidence band x citations x claim (4 typed, 1 unknown).
  const std::vector<CheckStatus> statuses = {CheckStatus::Supported, CheckStatus::Contradicted,
                                             CheckStatus::Insufficient};
  const std::vector<std::string> claim_ids = {"c_e", "c_n", "c_c", "c_p", "c_unknown"};
  const std::map<std::string, ClaimType> types = {{"c_e", ClaimType::Existence},
                                                  {"c_n", ClaimType::Count},
                                                  {"c_c", ClaimType::Color},
                                                  {"c_p", ClaimType::Position}};
  std::vector<ClaimCheck> atoms;
  GateConfig base;
  for (auto s : statuses) {
    for (const auto& id : claim_ids) {
      const double gate = types.count(id) ? base.gate_threshold.at(types.at(id)) : 0.8;
      for (double conf : {gate - 1e-9, gate, std::min(1.0, gate + 0.05)}) {
        for (bool cited : {false, true}) {
          ClaimCheck c;
          c.claim_id = id;
          c.status = s;
          c.original_status = s;
          c.confidence = conf;
          if (cited) c.citations = {"e_exist_x"};
          atoms.push_back(c);
        }
      }
    }
  }
  long long cases = 0, mismatches = 0;
  std::string first;
  for (bool require : {true, false}) {
    GateConfig g = base;
    g.require_citations_for_flip = require;
    auto run = [&](const std::vector<ClaimCheck>& checks) {
      ++cases;
      const auto got = consolidate(checks, g, types);
      const auto want = oracle_verdict(checks, g, types);
      if (got != want && mismatches++ == 0) {
        first = "n=" + std::to_string(checks.size()) + " got " + std::string(to_string(got)) + " want " +
                std::string(to_string(want));
      }
    };
    for (const auto& a : atoms) {
      run({a});
      for (const auto& b : atoms) {
        run({a, b});
        for (const auto& c : atoms) run({a, b, c});
      }
    }
  }
  bool empty_throws = false;
  try {
    consolidate({}, base, types);
  } catch (const Error& e) {
    empty_throws = e.code() == ErrorCode::EmptyChecks;
  }
  const double secs = seconds_since(t0);
  Result r;
  r.pass = mismatches == 0 && empty_throws && secs < kConsolidationBudgetS;
  r.detail = std::to_string(cases) + " check lists, " + std::to_string(mismatches) + " mismatches" +
             (first.empty() ? "" : " (first: " + first + ")") + (empty_throws ? "" : ", empty list did not throw") +
             ", " + fmt("%.2f s", secs);
  return r;
}

// ---- 2. gate soundness ----

Result check_gate_soundness() {
  const auto t0 = Clock::now();
  auto config = synthetic_config();
  config.synthetic.judge_noise = 0.15;
  config.synthetic.judge_noise_conf_min = 0.5;
  config.synthetic.judge_noise_conf_max = 0.8;
  auto run = simulate(config, kSoundnessScenes);
  const auto t = bench::transitions_of(run.outcomes);
  std::size_t errors = 0;
  for (const auto& tr : run.traces) errors += tr.stop_reason == StopReason::EarlyError;
  const double secs = seconds_since(t0);
  Result r;
  r.pass = t.over_corrected == 0 && errors == 0 && t.total() == run.sim.samples.size() && secs < kGateSoundnessBudgetS;
  r.detail = std::to_string(run.sim.samples.size()) + " questions, over-corrected " + std::to_string(t.over_corrected) +
             ", corrected " + std::to_string(t.error_corrected) + ", early errors " + std::to_string(errors) + ", " +
             fmt("%.1f s", secs);
  return r;
}

// ---- 3. end-to-end ----

Result check_end_to_end() {
  const auto t0 = Clock::now();
  auto config = synthetic_config();
  config.synthetic.init_wrong_rate = 0.5;
  auto run = simulate(config, kEndToEndScenes);
  const auto t = bench::transitions_of(run.outcomes);
  std::vector<std::pair<BinaryAnswer, BinaryAnswer>> pairs;
  for (const auto& o : run.outcomes) pairs.emplace_back(o.final_answer, o.label);
  const double acc = bench::pope_accuracy(pairs);
  const std::size_t wrong = t.error_corrected + t.incorrectly_preserved;
  const double secs = seconds_since(t0);
  Result r;
  r.pass = acc >= kMinEndToEndAccuracy && static_cast<double>(t.error_corrected) >= kMinCorrectedShare * wrong &&
           wrong > 0 && secs < kEndToEndBudgetS;
  r.detail = "accuracy " + bench::format_score(acc) + "%, corrected " + std::to_string(t.error_corrected) + " of " +
             std::to_string(wrong) + " wrong initial answers, " + fmt("%.1f s", secs);
  return r;
}

// ---- 4. early stop ----

Result check_early_stop() {
  auto stop_profile = [](const std::string& mode, std::size_t rounds, StopReason reason, std::string& detail) {
    auto config = synthetic_config();
    config.synthetic.judge_mode = mode;
    auto run = simulate(config, 10);
    std::size_t bad = 0;
    for (const auto& t : run.traces) {
      if (t.rounds.size() != rounds || t.stop_reason != reason) ++bad;
    }
    detail += mode + ": " + std::to_string(run.traces.size() - bad) + "/" + std::to_string(run.traces.size()) +
              " stopped after " + std::to_string(rounds) + " rounds with " + std::string(to_string(reason)) + "; ";
    return bad == 0 && !run.traces.empty();
  };
  Result r;
  const bool a = stop_profile("always_supported", 2, StopReason::StableSupported, r.detail);
  const bool b = stop_profile("always_insufficient", 3, StopReason::MaxRounds, r.detail);
  r.pass = a && b;
  return r;
}

// ---- 5. monotonicity ----

Result check_monotonicity() {
  auto config = synthetic_config();
  config.synthetic.judge_noise = 0.3;
  config.synthetic.judge_noise_conf_min = 0.5;
  config.synthetic.judge_noise_conf_max = 1.0;
  config.synthetic.miss_rate = 0.1;
  config.synthetic.hallucinate_rate = 0.15;
  config.synthetic.score_jitter = 0.6;
  auto store = std::make_shared<ResponseStore>();
  auto run = simulate(config, 60, store);

  std::vector<double> levels;
  for (int i = 0; i <= 20; ++i) levels.push_back(i / 20.0);

  // (a) flips under raised gate thresholds, per trace and in total.
  long long flip_violations = 0, flip_total_at_default = 0;
  std::vector<std::function<void(GateConfig&, double)>> sweeps;
  for (auto t : kAllClaimTypes) sweeps.push_back([t](GateConfig& g, double v) { g.gate_threshold[t] = v; });
  sweeps.push_back([](GateConfig& g, double v) {
    for (auto& [_, th] : g.gate_threshold) th = v;
  });
  for (const auto& trace : run.traces) flip_total_at_default += regate_trace(trace, config.gate).flips;
  for (const auto& sweep : sweeps) {
    std::vector<int> prev(run.traces.size(), -1);
    long long prev_total = -1;
    for (double v : levels) {
      GateConfig g = config.gate;
      sweep(g, v);
      long long total = 0;
      for (std::size_t i = 0; i < run.traces.size(); ++i) {
        const int f = regate_trace(run.traces[i], g).flips;
        if (prev[i] >= 0 && f > prev[i]) ++flip_violations;
        prev[i] = f;
        total += f;
      }
      if (prev_total >= 0 && total > prev_total) ++flip_violations;
      prev_total = total;
    }
  }

  // (b) kept instances under a raised ground_conf, over every recorded grounding.
  long long inst_violations = 0, groundings = 0;
  const auto& scene0 = *run.sim.scenes.front();
  for (const auto& e : store->entries()) {
    if (e.role != "grounder") continue;
    ++groundings;
    const auto response = parse_segment_response(e.response, scene0.width, scene0.height);
    for (auto ctype : kAllClaimTypes) {
      long long prev = -1;
      for (double v : levels) {
        GateConfig g = config.gate;
        g.ground_conf = v;
        g.ground_recheck_conf = std::min(g.ground_recheck_conf, v);
        // The existence recheck re-filters at a fixed lower floor when the
        // strict pass is empty; the confidence filter itself is what is swept.
        const auto n = static_cast<long long>(ctype == ClaimType::Existence
                                                  ? filter_instances(response, v).size()
                                                  : ground_from_response(response, e.purpose, ctype, g, 16)
                                                        .instances.size());
        if (prev >= 0 && n > prev) ++inst_violations;
        prev = n;
      }
    }
  }
  Result r;
  r.pass = run.traces.size() >= kMonotonicCorpus && flip_violations == 0 && inst_violations == 0 && groundings > 0 &&
           flip_total_at_default > 0;
  r.detail = std::to_string(run.traces.size()) + " recorded samples (" + std::to_string(store->size()) +
             " responses); flip violations " + std::to_string(flip_violations) + " (flips at defaults " +
             std::to_string(flip_total_at_default) + "); instance violations " + std::to_string(inst_violations) +
             " over " + std::to_string(groundings) + " groundings";
  return r;
}

// ---- 6. geometry ----

Relation oracle_relation(const BBox& a, const BBox& b) {
  const double ax = (a.x0 + a.x1) / 2.0, ay = (a.y0 + a.y1) / 2.0;
  const double bx = (b.x0 + b.x1) / 2.0, by = (b.y0 + b.y1) / 2.0;
  const double dx = ax - bx, dy = ay - by;
  if (dx == 0.0 && dy == 0.0) return Relation::Coincident;
  if (std::fabs(dx) >= std::fabs(dy)) return dx < 0 ? Relation::LeftOf : Relation::RightOf;
  return dy < 0 ? Relation::Above : Relation::Below;
}

Result check_geometry() {
  const auto t0 = Clock::now();
  std::mt19937 rng(7);
  auto box = [&](int w, int h) {
    std::uniform_int_distribution<int> xs(0, w - 1), ys(0, h - 1);
    int x0 = xs(rng), y0 = ys(rng);
    std::uniform_int_distribution<int> ws(1, w - x0), hs(1, h - y0);
    return BBox{x0, y0, x0 + ws(rng), y0 + hs(rng)};
  };
  long long rel_bad = 0, inv_bad = 0;
  for (int i = 0; i < kGeometryCases; ++i) {
    BBox a = box(64, 48), b = box(64, 48);
    if (i % 10 == 0) b = a;  // coincident centers
    if (i % 10 == 1) {       // exact diagonal tie
      const int d = std::uniform_int_distribution<int>(-8, 8)(rng);
      b = BBox{a.x0 + d, a.y0 + d, a.x1 + d, a.y1 + d};
    }
    const auto got = relate(a, b);
    if (got != oracle_relation(a, b)) ++rel_bad;
    if (got != Relation::Coincident && relate(b, a) != inverse(got)) ++inv_bad;
  }
  long long bbox_bad = 0, empty_bad = 0;
  for (int i = 0; i < kGeometryCases; ++i) {
    const int w = std::uniform_int_distribution<int>(1, 40)(rng), h = std::uniform_int_distribution<int>(1, 40)(rng);
    Mask m(w, h);
    const double density = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    std::bernoulli_distribution on(density);
    int x0 = w, y0 = h, x1 = 0, y1 = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (on(rng)) {
          m.set(x, y);
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x + 1);
          y1 = std::max(y1, y + 1);
        }
      }
    }
    if (x1 == 0) {
      try {
        mask_to_bbox(m);
        ++empty_bad;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyMask) ++empty_bad;
      }
      continue;
    }
    if (!(mask_to_bbox(m) == BBox{x0, y0, x1, y1})) ++bbox_bad;
  }
  const double secs = seconds_since(t0);
  Result r;
  r.pass = rel_bad == 0 && inv_bad == 0 && bbox_bad == 0 && empty_bad == 0 && secs < kGeometryBudgetS;
  r.detail = std::to_string(kGeometryCases) + " relation cases (" + std::to_string(rel_bad) + " wrong, " +
             std::to_string(inv_bad) + " asymmetric), " + std::to_string(kGeometryCases) + " mask_to_bbox cases (" +
             std::to_string(bbox_bad + empty_bad) + " wrong), " + fmt("%.2f s", secs);
  return r;
}

// ---- 7. metrics ----

Result check_metrics() {
  std::vector<std::string> failures;
  // MME: every answer right scores the maximum.
  std::vector<bench::MmeScored> mme;
  for (int i = 0; i < 30; ++i) {
    bench::MmeScored s;
    s.labels = {BinaryAnswer::Yes, BinaryAnswer::No};
    s.predictions = {BinaryAnswer::Yes, BinaryAnswer::No};
    mme.push_back(s);
  }
  const auto mme_score = bench::format_score(bench::mme_subset_score(mme));
  if (mme_score != "200.00") failures.push_back("MME " + mme_score);

  // Transitions partition their input.
  std::mt19937 rng(11);
  std::vector<std::pair<bool, bool>> pairs;
  for (int i = 0; i < 997; ++i) pairs.emplace_back(rng() & 1, rng() & 1);
  const auto t = bench::transition_stats(pairs);
  std::size_t cp = 0, ec = 0, oc = 0, ip = 0;
  for (auto [a, b] : pairs) (a ? (b ? cp : oc) : (b ? ec : ip))++;
  if (t.total() != pairs.size() || t.correctly_preserved != cp || t.error_corrected != ec || t.over_corrected != oc ||
      t.incorrectly_preserved != ip) {
    failures.push_back("transitions do not partition");
  }

  // POPE: 90 of 100.
  std::vector<std::pair<BinaryAnswer, BinaryAnswer>> pope;
  for (int i = 0; i < 100; ++i) {
    const auto label = i % 2 ? BinaryAnswer::Yes : BinaryAnswer::No;
    pope.emplace_back(i < 90 ? label : negate(label), label);
  }
  const auto pope_score = bench::format_score(bench::pope_accuracy(pope));
  if (pope_score != "90.00") failures.push_back("POPE " + pope_score);

  // Efficiency table over a simulated run.
  auto config = synthetic_config();
  auto run = simulate(config, 20);
  const auto report = bench::efficiency_report(run.traces, config.gate.max_rounds);
  const auto table = bench::format_table(report);
  std::istringstream lines(table);
  std::string header;
  std::getline(lines, header);
  const bool header_ok = header.find("Iteration") != std::string::npos &&
                         header.find("Latency (s)") != std::string::npos &&
                         header.find("Checked Case") != std::string::npos &&
                         header.find("Memory (MB)") != std::string::npos;
  bool rows_ok = report.rows.size() == static_cast<std::size_t>(config.gate.max_rounds);
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    rows_ok = rows_ok && report.rows[i].round == static_cast<int>(i) + 1;
    if (i > 0) rows_ok = rows_ok && report.rows[i].checked <= report.rows[i - 1].checked;
  }
  rows_ok = rows_ok && !report.rows.empty() && report.rows[0].checked == run.traces.size();
  if (!header_ok) failures.push_back("efficiency header");
  if (!rows_ok) failures.push_back("efficiency rows");

  Result r;
  r.pass = failures.empty();
  std::string checked;
  for (const auto& row : report.rows) checked += (checked.empty() ? "" : "/") + std::to_string(row.checked);
  r.detail = "MME " + mme_score + ", POPE " + pope_score + ", transitions " + std::to_string(t.total()) + "/" +
             std::to_string(pairs.size()) + ", checked per round " + checked;
  for (const auto& f : failures) r.detail += "; FAILED " + f;
  return r;
}

// ---- 8. parser fuzz ----

bool rapidjson_accepts(const std::string& text) {
  rapidjson::Document d;
  d.Parse<rapidjson::kParseValidateEncodingFlag>(text.c_str(), text.size());
  return !d.HasParseError();
}

Result check_parser_fuzz() {
  const std::vector<std::string> seeds = {
      R"({"verdict":"supported","checked":[{"claim_id":"c1","status":"supported","confidence":0.93,"why":"seen","citations":["e_exist_dog"]}]})",
      R"({"answer":"Yes","verifiable_claims":[{"id":"c1","type":"existence","text":"There is a dog.","targets":["dog"],"priority":1}]})",
      R"({"answer":"No","new_claims":[{"id":"n1","type":"count","text":"There are two cups.","targets":["cup"],"priority":2}]})",
      R"({"answer":"yes","confidence":"high","reason":"clearly visible"})",
      R"(```json
{"verdict":"contradicted","checked":[{"claim_id":"c1","status":"contradicted","confidence":0.9,"why":"none","citations":["e_count_cup",]}],}
```)",
      R"(Sure! Here is the result: {"answer": “Yes”, "verifiable_claims": []} hope this helps)",
  };
  const std::string alphabet = "{}[]\",:\\ \n\tabcxyz01.-`";
  std::mt19937 rng(1234);
  int crashes = 0, oracle_disagreements = 0;
  std::string first;
  for (int i = 0; i < kFuzzCases; ++i) {
    std::string s = seeds[rng() % seeds.size()];
    const int edits = 1 + static_cast<int>(rng() % 6);
    for (int k = 0; k < edits && !s.empty(); ++k) {
      const std::size_t pos = rng() % s.size();
      switch (rng() % 4) {
        case 0: s.erase(pos, 1 + rng() % 3); break;
        case 1: s.insert(pos, 1, alphabet[rng() % alphabet.size()]); break;
        case 2: s[pos] = alphabet[rng() % alphabet.size()]; break;
        default: s = s.substr(0, pos); break;
      }
    }
    try {
      const bool strict = parse_strict(s).has_value();
      if (strict != rapidjson_accepts(s) && oracle_disagreements++ == 0) first = s;
      (void)parse_with_repair(s);
      (void)parse_verify_response(s);
      (void)parse_init_response(s, ClaimType::Existence);
      (void)parse_refine_response(s, ClaimType::Count);
      (void)parse_yes_guard_response(s);
    } catch (...) {
      ++crashes;
    }
  }

  // Golden payloads.
  int golden_bad = 0;
  {
    auto v = parse_verify_response(seeds[0]);
    golden_bad += !(v.ok() && !v.repaired && v.value->checked.size() == 1 &&
                    v.value->checked[0].status == CheckStatus::Supported &&
                    v.value->checked[0].citations == std::vector<std::string>{"e_exist_dog"});
    auto init = parse_init_response(seeds[1], ClaimType::Existence);
    golden_bad += !(init.ok() && init.value->answer == BinaryAnswer::Yes && init.value->claims.size() == 1 &&
                    init.value->claims[0].targets == std::vector<std::string>{"dog"});
    auto ref = parse_refine_response(seeds[2], ClaimType::Count);
    golden_bad += !(ref.ok() && ref.value->answer == BinaryAnswer::No && ref.value->new_claims.size() == 1);
    auto guard = parse_yes_guard_response(seeds[3]);
    golden_bad += !(guard.ok() && guard.value->answer == GuardAnswer::Yes &&
                    guard.value->confidence == GuardConfidence::High);
    auto fenced = parse_verify_response(seeds[4]);
    golden_bad += !(fenced.ok() && fenced.repaired && fenced.value->checked.size() == 1 &&
                    fenced.value->checked[0].status == CheckStatus::Contradicted);
  }
  Result r;
  r.pass = crashes == 0 && oracle_disagreements == 0 && golden_bad == 0;
  r.detail = std::to_string(kFuzzCases) + " mutated payloads, " + std::to_string(crashes) + " crashes, " +
             std::to_string(oracle_disagreements) + " strict-parse disagreements with reference parser" +
             (first.empty() ? "" : " (first: " + first.substr(0, 60) + ")") + ", " + std::to_string(5 - golden_bad) +
             "/5 golden payloads";
  return r;
}

// ---- 9. replay determinism ----

Result check_replay() {
  auto config = synthetic_config();
  config.synthetic.judge_noise = 0.2;
  config.synthetic.miss_rate = 0.05;
  config.synthetic.score_jitter = 0.3;
  auto sim = make_simulation(config, static_cast<int>((kReplaySamples + 3) / 4));
  sim.samples.resize(kReplaySamples);
  auto store = std::make_shared<ResponseStore>();
  BatchOptions opts;
  opts.workers = 2;
  opts.record = store;
  const auto recorded = run_simulation(sim, config, Templates::builtin(), opts);
  // Round-trip the store through its file form before replaying.
  const auto path = std::filesystem::temp_directory_path() / "kestrel_acceptance_responses.jsonl";
  store->save_jsonl(path);
  const auto loaded = ResponseStore::load_jsonl(path);
  std::filesystem::remove(path);
  BatchOptions ropts;
  ropts.workers = 2;
  const auto replayed = replay_run(unlabeled(sim.samples), loaded, config, Templates::builtin(), ropts);
  std::size_t same = 0;
  for (std::size_t i = 0; i < recorded.size() && i < replayed.size(); ++i) {
    const auto& a = recorded[i];
    const auto& b = replayed[i];
    bool eq = a.sample_id == b.sample_id && a.final_answer == b.final_answer && a.initial_answer == b.initial_answer &&
              a.rounds.size() == b.rounds.size() && a.stop_reason == b.stop_reason;
    for (std::size_t k = 0; eq && k < a.rounds.size(); ++k) {
      eq = a.rounds[k].gate_decision == b.rounds[k].gate_decision && a.rounds[k].answer_after == b.rounds[k].answer_after;
    }
    same += eq;
  }
  std::size_t errors = 0;
  for (const auto& t : replayed) errors += t.stop_reason == StopReason::EarlyError;
  Result r;
  r.pass = recorded.size() == kReplaySamples && replayed.size() == kReplaySamples && same == kReplaySamples &&
           errors == 0;
  r.detail = std::to_string(same) + "/" + std::to_string(replayed.size()) + " replayed samples identical, " +
             std::to_string(loaded->size()) + " recorded responses, " + std::to_string(errors) + " replay errors";
  return r;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Result()> run;
  };
  const std::vector<Criterion> criteria = {
      {"consolidation-oracle", check_consolidation}, {"gate-soundness", check_gate_soundness},
      {"end-to-end-correction", check_end_to_end},   {"early-stop", check_early_stop},
      {"monotonicity", check_monotonicity},          {"geometry-oracle", check_geometry},
      {"metrics", check_metrics},                    {"parser-fuzz", check_parser_fuzz},
      {"replay-determinism", check_replay},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Result r;
    try {
      r = criteria[i].run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += !r.pass;
    std::printf("%s %zu %s: %s\n", r.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, r.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
