#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/model.hpp"
#include "kestrel/records.hpp"

namespace kestrel::bench {

enum class PopeSource { Coco, Aokvqa, Gqa };
enum class PopeSplit { Random, Popular, Adversarial };
enum class MmeSubset { Existence, Count, Position, Color };

std::string_view to_string(PopeSource s) noexcept;
std::string_view to_string(PopeSplit s) noexcept;
std::string_view to_string(MmeSubset s) noexcept;
std::optional<PopeSource> parse_pope_source(std::string_view s);
std::optional<PopeSplit> parse_pope_split(std::string_view s);
std::optional<MmeSubset> parse_mme_subset(std::string_view s);

struct PopeRecord {
  std::string question_id;
  std::string image;
  std::string question;
  BinaryAnswer label = BinaryAnswer::No;
  PopeSource source = PopeSource::Coco;
  PopeSplit split = PopeSplit::Random;
};

struct MmeQuestion {
  std::string question_id;
  std::string question;
  BinaryAnswer label = BinaryAnswer::No;
};

struct MmeRecord {
  std::string image;
  MmeSubset subset = MmeSubset::Existence;
  std::array<MmeQuestion, 2> questions;
};

/// Line-delimited JSON, one question per line:
///   {"question_id", "image", "question", "label": "yes"|"no", "source", "split"}
/// The community layout ({"question_id", "image", "text", "label"} with source
/// and split encoded in the file name, e.g. coco_pope_adversarial.json) is
/// accepted too; explicit fields win over the file name. Throws Error(IoError)
/// or Error(ParseFailure) naming the line.
std::vector<PopeRecord> load_pope(const std::filesystem::path& path);

/// Line-delimited JSON, one question per line:
///   {"question_id", "image", "subset", "question", "label"}
/// grouped by (subset, image). Throws Error(ParseFailure) when an image does
/// not have exactly two questions.
std::vector<MmeRecord> load_mme(const std::filesystem::path& path);

/// Community MME layout: one "<image>\t<question>\t<Yes|No>" line per question.
std::vector<MmeRecord> load_mme_tsv(const std::filesystem::path& path, MmeSubset subset);

/// Answer files: {"question_id", "text"|"answer"} per line -> raw prediction text.
std::map<std::string, std::string> load_answers(const std::filesystem::path& path);

/// Pipeline inputs; images resolve against image_root. Labels go separately.
std::vector<LabeledSample> pope_samples(const std::vector<PopeRecord>& records, const std::filesystem::path& image_root);
std::vector<LabeledSample> mme_samples(const std::vector<MmeRecord>& records, const std::filesystem::path& image_root);

/// Leading yes/no token, case-insensitive; nullopt for anything else.
std::optional<BinaryAnswer> normalize_prediction(std::string_view text);

struct Accuracy {
  double percent = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t malformed = 0;  // predictions that were neither yes nor no
};

/// 100 * correct / total. Throws Error(EmptyInput).
double pope_accuracy(const std::vector<std::pair<BinaryAnswer, BinaryAnswer>>& pairs);
/// Same over raw prediction text; malformed predictions count as wrong.
Accuracy pope_accuracy_text(const std::vector<std::pair<std::string, BinaryAnswer>>& pairs);

struct MmeScored {
  std::array<std::optional<BinaryAnswer>, 2> predictions;
  std::array<BinaryAnswer, 2> labels;
};

/// 100 * question accuracy + 100 * rate of images with both right; in [0, 200].
/// Throws Error(MissingPrediction) or Error(EmptyInput).
double mme_subset_score(const std::vector<MmeScored>& records);

struct Transitions {
  std::size_t correctly_preserved = 0;
  std::size_t error_corrected = 0;
  std::size_t over_corrected = 0;
  std::size_t incorrectly_preserved = 0;

  std::size_t total() const noexcept {
    return correctly_preserved + error_corrected + over_corrected + incorrectly_preserved;
  }
  friend bool operator==(const Transitions&, const Transitions&) = default;
};

/// Buckets (initial_correct, final_correct) pairs.
Transitions transition_stats(const std::vector<std::pair<bool, bool>>& pairs);

struct EfficiencyRow {
  int round = 0;
  std::size_t checked = 0;      // samples that reached this round
  double mean_latency_ms = 0.0;  // over those samples, all stages of the round
  std::optional<double> peak_memory_mb;
};

struct EfficiencyReport {
  std::size_t samples = 0;
  double mean_init_ms = 0.0;
  double mean_total_ms = 0.0;
  std::vector<EfficiencyRow> rows;
};

/// One row per round up to the deepest trace (or `max_rounds` when larger).
EfficiencyReport efficiency_report(const std::vector<RunTrace>& traces, int max_rounds = 0,
                                   std::optional<double> peak_memory_mb = std::nullopt);

/// Two decimals ("91.53").
std::string format_score(double v);

// ---- joining traces with labels ----

/// Gold labels and grouping metadata keyed by sample id.
struct LabelRecord {
  std::string sample_id;
  std::string image;
  BinaryAnswer label = BinaryAnswer::No;
  std::map<std::string, std::string> meta;  // source, split, subset
};

std::vector<LabelRecord> labels_of(const std::vector<PopeRecord>& records);
std::vector<LabelRecord> labels_of(const std::vector<MmeRecord>& records);
std::vector<LabelRecord> labels_of(const std::vector<LabeledSample>& samples);

/// {"sample_id", "image", "label", ...meta} per line.
void save_labels(const std::vector<LabelRecord>& labels, const std::filesystem::path& path);
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);

struct Outcome {
  std::string sample_id;
  BinaryAnswer initial = BinaryAnswer::No;
  BinaryAnswer final_answer = BinaryAnswer::No;
  BinaryAnswer label = BinaryAnswer::No;
  std::string image;
  std::map<std::string, std::string> meta;
};

/// Traces joined with labels by sample id; traces without a label are
/// reported in `unmatched`.
std::vector<Outcome> join_outcomes(const std::vector<RunTrace>& traces, const std::vector<LabelRecord>& labels,
                                   std::vector<std::string>* unmatched = nullptr);

Transitions transitions_of(const std::vector<Outcome>& outcomes);

/// Accuracy per "<source>/<split>" group plus "all".
std::map<std::string, double> pope_table(const std::vector<Outcome>& outcomes);

/// Score per subset plus "total", grouping labeled questions by (subset,
/// image). A labeled question without a trace raises Error(MissingPrediction).
std::map<std::string, double> mme_table(const std::vector<RunTrace>& traces, const std::vector<LabelRecord>& labels);

nlohmann::json to_json(const Transitions& t);
nlohmann::json to_json(const EfficiencyReport& r);
std::string format_table(const EfficiencyReport& r);
std::string format_table(const Transitions& t);

}  // namespace kestrel::bench
