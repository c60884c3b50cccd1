#include "kestrel/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "kestrel/error.hpp"
#include "kestrel/lexicon.hpp"

namespace kestrel::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class E, std::size_t N>
std::optional<E> lookup(const std::pair<E, std::string_view> (&table)[N], std::string_view s) {
  const auto key = to_lower(trim(s));
  for (const auto& [e, name] : table) {
    if (name == key) return e;
  }
  return std::nullopt;
}

template <class E, std::size_t N>
std::string_view name_of(const std::pair<E, std::string_view> (&table)[N], E e) {
  for (const auto& [v, name] : table) {
    if (v == e) return name;
  }
  return "?";
}

constexpr std::pair<PopeSource, std::string_view> kSources[] = {
    {PopeSource::Coco, "coco"}, {PopeSource::Aokvqa, "aokvqa"}, {PopeSource::Gqa, "gqa"}};
constexpr std::pair<PopeSplit, std::string_view> kSplits[] = {
    {PopeSplit::Random, "random"}, {PopeSplit::Popular, "popular"}, {PopeSplit::Adversarial, "adversarial"}};
constexpr std::pair<MmeSubset, std::string_view> kSubsets[] = {{MmeSubset::Existence, "existence"},
                                                               {MmeSubset::Count, "count"},
                                                               {MmeSubset::Position, "position"},
                                                               {MmeSubset::Color, "color"}};

/// Calls `fn(line_number, json)` for every non-blank line.
template <class Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseFailure, path.filename().string() + " line " + std::to_string(n) + ": " + e.what());
    }
    try {
      fn(n, j);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseFailure, path.filename().string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
}

std::string id_string(const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

BinaryAnswer label_of(const json& j, const fs::path& path, std::size_t line) {
  auto a = parse_binary_answer(j.get<std::string>());
  if (!a) {
    throw Error(ErrorCode::ParseFailure,
                path.filename().string() + " line " + std::to_string(line) + ": label must be yes or no");
  }
  return *a;
}

std::vector<MmeRecord> group_mme(std::vector<std::tuple<std::string, MmeSubset, MmeQuestion>> rows,
                                 const fs::path& path) {
  std::map<std::pair<int, std::string>, MmeRecord> grouped;
  std::map<std::pair<int, std::string>, int> filled;
  std::vector<std::pair<int, std::string>> order;
  for (auto& [image, subset, q] : rows) {
    const auto key = std::make_pair(static_cast<int>(subset), image);
    auto& slot = filled[key];
    if (slot == 0) order.push_back(key);
    if (slot >= 2) {
      throw Error(ErrorCode::ParseFailure, path.filename().string() + ": image " + image + " has more than two questions");
    }
    auto& rec = grouped[key];
    rec.image = image;
    rec.subset = subset;
    rec.questions[static_cast<std::size_t>(slot++)] = std::move(q);
  }
  std::vector<MmeRecord> out;
  for (const auto& key : order) {
    if (filled[key] != 2) {
      throw Error(ErrorCode::ParseFailure, path.filename().string() + ": image " + key.second + " has one question");
    }
    out.push_back(std::move(grouped[key]));
  }
  return out;
}

}  // namespace

std::string_view to_string(PopeSource s) noexcept { return name_of(kSources, s); }
std::string_view to_string(PopeSplit s) noexcept { return name_of(kSplits, s); }
std::string_view to_string(MmeSubset s) noexcept { return name_of(kSubsets, s); }
std::optional<PopeSource> parse_pope_source(std::string_view s) { return lookup(kSources, s); }
std::optional<PopeSplit> parse_pope_split(std::string_view s) { return lookup(kSplits, s); }
std::optional<MmeSubset> parse_mme_subset(std::string_view s) { return lookup(kSubsets, s); }

std::vector<PopeRecord> load_pope(const fs::path& path) {
  const auto stem = to_lower(path.filename().string());
  PopeSource file_source = PopeSource::Coco;
  PopeSplit file_split = PopeSplit::Random;
  for (const auto& [e, name] : kSources) {
    if (stem.find(name) != std::string::npos) file_source = e;
  }
  for (const auto& [e, name] : kSplits) {
    if (stem.find(name) != std::string::npos) file_split = e;
  }
  std::vector<PopeRecord> out;
  for_each_json_line(path, [&](std::size_t line, const json& j) {
    PopeRecord r;
    r.question_id = id_string(j.at("question_id"));
    r.image = j.at("image").get<std::string>();
    r.question = j.contains("question") ? j.at("question").get<std::string>() : j.at("text").get<std::string>();
    r.label = label_of(j.at("label"), path, line);
    r.source = file_source;
    r.split = file_split;
    if (j.contains("source")) {
      auto s = parse_pope_source(j.at("source").get<std::string>());
      if (!s) throw Error(ErrorCode::ParseFailure, "line " + std::to_string(line) + ": unknown source");
      r.source = *s;
    }
    if (j.contains("split")) {
      auto s = parse_pope_split(j.at("split").get<std::string>());
      if (!s) throw Error(ErrorCode::ParseFailure, "line " + std::to_string(line) + ": unknown split");
      r.split = *s;
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<MmeRecord> load_mme(const fs::path& path) {
  std::vector<std::tuple<std::string, MmeSubset, MmeQuestion>> rows;
  for_each_json_line(path, [&](std::size_t line, const json& j) {
    auto subset = parse_mme_subset(j.at("subset").get<std::string>());
    if (!subset) throw Error(ErrorCode::ParseFailure, "line " + std::to_string(line) + ": unknown subset");
    MmeQuestion q;
    const auto image = j.at("image").get<std::string>();
    q.question_id = j.contains("question_id") ? id_string(j.at("question_id"))
                                              : std::string(to_string(*subset)) + "/" + image + "#" + std::to_string(line);
    q.question = j.at("question").get<std::string>();
    q.label = label_of(j.at("label"), path, line);
    rows.emplace_back(image, *subset, std::move(q));
  });
  return group_mme(std::move(rows), path);
}

std::vector<MmeRecord> load_mme_tsv(const fs::path& path, MmeSubset subset) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::tuple<std::string, MmeSubset, MmeQuestion>> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error(ErrorCode::ParseFailure, path.filename().string() + " line " + std::to_string(n) + ": expected 3 columns");
    }
    MmeQuestion q;
    const auto image = line.substr(0, t1);
    q.question = line.substr(t1 + 1, t2 - t1 - 1);
    auto label = parse_binary_answer(line.substr(t2 + 1));
    if (!label) {
      throw Error(ErrorCode::ParseFailure, path.filename().string() + " line " + std::to_string(n) + ": bad answer");
    }
    q.label = *label;
    q.question_id = std::string(to_string(subset)) + "/" + image + "#" + std::to_string(n);
    rows.emplace_back(image, subset, std::move(q));
  }
  return group_mme(std::move(rows), path);
}

std::map<std::string, std::string> load_answers(const fs::path& path) {
  std::map<std::string, std::string> out;
  for_each_json_line(path, [&](std::size_t, const json& j) {
    const auto& text = j.contains("text") ? j.at("text") : j.at("answer");
    out[id_string(j.at("question_id"))] = text.get<std::string>();
  });
  return out;
}

std::vector<LabeledSample> pope_samples(const std::vector<PopeRecord>& records, const fs::path& image_root) {
  std::vector<LabeledSample> out;
  for (const auto& r : records) {
    LabeledSample s;
    s.sample.sample_id = r.question_id;
    s.sample.image = ImageRef(image_root / r.image);
    s.sample.question = r.question;
    s.sample.meta = {{"source", std::string(to_string(r.source))}, {"split", std::string(to_string(r.split))}};
    s.gold = r.label;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LabeledSample> mme_samples(const std::vector<MmeRecord>& records, const fs::path& image_root) {
  std::vector<LabeledSample> out;
  for (const auto& r : records) {
    for (const auto& q : r.questions) {
      LabeledSample s;
      s.sample.sample_id = q.question_id;
      s.sample.image = ImageRef(image_root / r.image);
      s.sample.question = q.question;
      s.sample.meta = {{"subset", std::string(to_string(r.subset))}};
      s.gold = q.label;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::optional<BinaryAnswer> normalize_prediction(std::string_view text) { return leading_binary_answer(text); }

double pope_accuracy(const std::vector<std::pair<BinaryAnswer, BinaryAnswer>>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "accuracy needs at least one prediction");
  const auto correct = std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.first == p.second; });
  return 100.0 * static_cast<double>(correct) / static_cast<double>(pairs.size());
}

Accuracy pope_accuracy_text(const std::vector<std::pair<std::string, BinaryAnswer>>& pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "accuracy needs at least one prediction");
  Accuracy a;
  a.total = pairs.size();
  for (const auto& [text, label] : pairs) {
    auto p = normalize_prediction(text);
    if (!p) {
      ++a.malformed;
    } else if (*p == label) {
      ++a.correct;
    }
  }
  a.percent = 100.0 * static_cast<double>(a.correct) / static_cast<double>(a.total);
  return a;
}

double mme_subset_score(const std::vector<MmeScored>& records) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "MME score needs at least one image");
  std::size_t right = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    int here = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& p = records[i].predictions[k];
      if (!p) {
        throw Error(ErrorCode::MissingPrediction,
                    "image " + std::to_string(i) + " lacks a prediction for question " + std::to_string(k + 1));
      }
      if (*p == records[i].labels[k]) ++here;
    }
    right += static_cast<std::size_t>(here);
    if (here == 2) ++both;
  }
  const double n = static_cast<double>(records.size());
  return 100.0 * static_cast<double>(right) / (2.0 * n) + 100.0 * static_cast<double>(both) / n;
}

Transitions transition_stats(const std::vector<std::pair<bool, bool>>& pairs) {
  Transitions t;
  for (const auto& [initial, final_ok] : pairs) {
    if (initial && final_ok) {
      ++t.correctly_preserved;
    } else if (!initial && final_ok) {
      ++t.error_corrected;
    } else if (initial) {
      ++t.over_corrected;
    } else {
      ++t.incorrectly_preserved;
    }
  }
  return t;
}

EfficiencyReport efficiency_report(const std::vector<RunTrace>& traces, int max_rounds,
                                   std::optional<double> peak_memory_mb) {
  EfficiencyReport r;
  r.samples = traces.size();
  int deepest = max_rounds;
  for (const auto& t : traces) deepest = std::max(deepest, static_cast<int>(t.rounds.size()));
  std::vector<double> sums(static_cast<std::size_t>(deepest), 0.0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(deepest), 0);
  double init_sum = 0.0;
  double total_sum = 0.0;
  for (const auto& t : traces) {
    for (const auto& [stage, ms] : t.latency_ms) init_sum += static_cast<double>(ms);
    total_sum += static_cast<double>(t.total_latency_ms);
    for (std::size_t i = 0; i < t.rounds.size(); ++i) {
      ++counts[i];
      for (const auto& [stage, ms] : t.rounds[i].latency_ms) sums[i] += static_cast<double>(ms);
    }
  }
  if (!traces.empty()) {
    r.mean_init_ms = init_sum / static_cast<double>(traces.size());
    r.mean_total_ms = total_sum / static_cast<double>(traces.size());
  }
  for (int i = 0; i < deepest; ++i) {
    EfficiencyRow row;
    row.round = i + 1;
    row.checked = counts[static_cast<std::size_t>(i)];
    row.mean_latency_ms = row.checked ? sums[static_cast<std::size_t>(i)] / static_cast<double>(row.checked) : 0.0;
    row.peak_memory_mb = peak_memory_mb;
    r.rows.push_back(row);
  }
  return r;
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<LabelRecord> labels_of(const std::vector<PopeRecord>& records) {
  std::vector<LabelRecord> out;
  for (const auto& r : records) {
    out.push_back({r.question_id, r.image, r.label,
                   {{"source", std::string(to_string(r.source))}, {"split", std::string(to_string(r.split))}}});
  }
  return out;
}

std::vector<LabelRecord> labels_of(const std::vector<MmeRecord>& records) {
  std::vector<LabelRecord> out;
  for (const auto& r : records) {
    for (const auto& q : r.questions) {
      out.push_back({q.question_id, r.image, q.label, {{"subset", std::string(to_string(r.subset))}}});
    }
  }
  return out;
}

std::vector<LabelRecord> labels_of(const std::vector<LabeledSample>& samples) {
  std::vector<LabelRecord> out;
  for (const auto& s : samples) {
    if (!s.gold) continue;
    out.push_back({s.sample.sample_id, s.sample.image.describe(), *s.gold, s.sample.meta});
  }
  return out;
}

void save_labels(const std::vector<LabelRecord>& labels, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const auto& l : labels) {
    json j = {{"sample_id", l.sample_id}, {"image", l.image}, {"label", std::string(to_string(l.label))}};
    for (const auto& [k, v] : l.meta) j[k] = v;
    out << j.dump() << "\n";
  }
}

std::vector<LabelRecord> load_labels(const fs::path& path) {
  std::vector<LabelRecord> out;
  for_each_json_line(path, [&](std::size_t line, const json& j) {
    LabelRecord l;
    l.sample_id = id_string(j.at("sample_id"));
    l.image = j.value("image", "");
    l.label = label_of(j.at("label"), path, line);
    for (const auto& [k, v] : j.items()) {
      if (k != "sample_id" && k != "image" && k != "label" && v.is_string()) l.meta[k] = v.get<std::string>();
    }
    out.push_back(std::move(l));
  });
  return out;
}

std::vector<Outcome> join_outcomes(const std::vector<RunTrace>& traces, const std::vector<LabelRecord>& labels,
                                   std::vector<std::string>* unmatched) {
  std::map<std::string, const LabelRecord*> by_id;
  for (const auto& l : labels) by_id[l.sample_id] = &l;
  std::vector<Outcome> out;
  for (const auto& t : traces) {
    auto it = by_id.find(t.sample_id);
    if (it == by_id.end()) {
      if (unmatched) unmatched->push_back(t.sample_id);
      continue;
    }
    out.push_back({t.sample_id, t.initial_answer, t.final_answer, it->second->label, it->second->image,
                   it->second->meta});
  }
  return out;
}

Transitions transitions_of(const std::vector<Outcome>& outcomes) {
  std::vector<std::pair<bool, bool>> pairs;
  for (const auto& o : outcomes) pairs.emplace_back(o.initial == o.label, o.final_answer == o.label);
  return transition_stats(pairs);
}

std::map<std::string, double> pope_table(const std::vector<Outcome>& outcomes) {
  std::map<std::string, std::vector<std::pair<BinaryAnswer, BinaryAnswer>>> groups;
  for (const auto& o : outcomes) {
    auto meta = [&](const char* k) {
      auto it = o.meta.find(k);
      return it == o.meta.end() ? std::string("-") : it->second;
    };
    groups[meta("source") + "/" + meta("split")].emplace_back(o.final_answer, o.label);
    groups["all"].emplace_back(o.final_answer, o.label);
  }
  std::map<std::string, double> out;
  for (const auto& [k, pairs] : groups) out[k] = pope_accuracy(pairs);
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "no labeled traces to score");
  return out;
}

std::map<std::string, double> mme_table(const std::vector<RunTrace>& traces, const std::vector<LabelRecord>& labels) {
  std::map<std::string, BinaryAnswer> predicted;
  for (const auto& t : traces) predicted[t.sample_id] = t.final_answer;
  std::map<std::string, std::map<std::string, MmeScored>> subsets;
  std::map<std::string, std::map<std::string, int>> filled;
  for (const auto& l : labels) {
    auto it = l.meta.find("subset");
    const auto subset = it == l.meta.end() ? std::string("-") : it->second;
    auto& slot = filled[subset][l.image];
    if (slot >= 2) throw Error(ErrorCode::InvalidArgument, "image " + l.image + " has more than two questions");
    auto& rec = subsets[subset][l.image];
    auto p = predicted.find(l.sample_id);
    if (p == predicted.end()) throw Error(ErrorCode::MissingPrediction, "no trace for question " + l.sample_id);
    rec.predictions[static_cast<std::size_t>(slot)] = p->second;
    rec.labels[static_cast<std::size_t>(slot)] = l.label;
    ++slot;
  }
  std::map<std::string, double> out;
  double total = 0.0;
  for (const auto& [subset, images] : subsets) {
    std::vector<MmeScored> records;
    for (const auto& [image, rec] : images) {
      if (filled[subset][image] != 2) {
        throw Error(ErrorCode::MissingPrediction, "image " + image + " in " + subset + " has one question");
      }
      records.push_back(rec);
    }
    out[subset] = mme_subset_score(records);
    total += out[subset];
  }
  if (out.empty()) throw Error(ErrorCode::EmptyInput, "no labeled traces to score");
  out["total"] = total;
  return out;
}

json to_json(const Transitions& t) {
  return {{"correctly_preserved", t.correctly_preserved},
          {"error_corrected", t.error_corrected},
          {"over_corrected", t.over_corrected},
          {"incorrectly_preserved", t.incorrectly_preserved},
          {"total", t.total()}};
}

json to_json(const EfficiencyReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j = {{"round", row.round}, {"checked", row.checked}, {"mean_latency_ms", row.mean_latency_ms}};
    if (row.peak_memory_mb) j["peak_memory_mb"] = *row.peak_memory_mb;
    rows.push_back(std::move(j));
  }
  return {{"samples", r.samples}, {"mean_init_ms", r.mean_init_ms}, {"mean_total_ms", r.mean_total_ms}, {"rows", rows}};
}

std::string format_table(const EfficiencyReport& r) {
  std::ostringstream o;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s %12s %14s %12s\n", "Iteration", "Latency (s)", "Checked Case", "Memory (MB)");
  o << buf;
  for (const auto& row : r.rows) {
    const auto mem = row.peak_memory_mb ? format_score(*row.peak_memory_mb) : std::string("-");
    std::snprintf(buf, sizeof buf, "%-10d %12.3f %14zu %12s\n", row.round, row.mean_latency_ms / 1000.0, row.checked,
                  mem.c_str());
    o << buf;
  }
  std::snprintf(buf, sizeof buf, "samples %zu, mean init %.3f s, mean total %.3f s\n", r.samples,
                r.mean_init_ms / 1000.0, r.mean_total_ms / 1000.0);
  o << buf;
  return o.str();
}

std::string format_table(const Transitions& t) {
  std::ostringstream o;
  const double n = t.total() ? static_cast<double>(t.total()) : 1.0;
  auto row = [&](const char* name, std::size_t v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%-22s %8zu %8.2f%%\n", name, v, 100.0 * static_cast<double>(v) / n);
    o << buf;
  };
  row("correctly preserved", t.correctly_preserved);
  row("error corrected", t.error_corrected);
  row("over-corrected", t.over_corrected);
  row("incorrectly preserved", t.incorrectly_preserved);
  o << "total " << t.total() << "\n";
  return o.str();
}

}  // namespace kestrel::bench
