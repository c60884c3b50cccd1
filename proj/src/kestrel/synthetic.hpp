#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kestrel/backends.hpp"
#include "kestrel/config.hpp"
#include "kestrel/geometry.hpp"
#include "kestrel/image.hpp"
#include "kestrel/model.hpp"

namespace kestrel::synthetic {

/// Closed category vocabulary; every name pluralizes with a trailing "s".
const std::vector<std::string>& categories();
/// Object colors: the basic color terms minus white (the canvas color).
const std::vector<std::string>& object_colors();
/// Flat render color of a basic color term. Throws Error(InvalidArgument).
Rgb palette(std::string_view color);

/// Category a concept phrase refers to ("dogs", "Dog" -> "dog").
std::optional<std::string> category_of(std::string_view phrase);

struct SceneObject {
  std::string category;
  std::string color;
  BBox bbox;
  int instance_id = 0;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneQuestion {
  std::string text;
  ClaimType type = ClaimType::Existence;
  BinaryAnswer gold = BinaryAnswer::No;

  friend bool operator==(const SceneQuestion&, const SceneQuestion&) = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::string difficulty = "random";
  int width = 320;
  int height = 240;
  std::vector<SceneObject> objects;
  std::vector<SceneQuestion> questions;

  std::vector<const SceneObject*> instances(std::string_view category) const;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

nlohmann::json to_json(const SceneSpec& scene);
/// Throws Error(ParseFailure).
SceneSpec scene_from_json(const nlohmann::json& j);

/// Difficulty picks absent categories for existence questions: "random"
/// (uniform), "popular" (most frequent first) or "adversarial" (categories
/// that co-occur with a present one). Throws Error(InvalidArgument) otherwise.
SceneSpec generate_scene(std::uint64_t seed, std::string_view difficulty = "random", int width = 320,
                         int height = 240);

/// Flat-color rectangles on a white canvas.
Image render_scene(const SceneSpec& scene);

/// A yes/no question or claim read with the rig's grammar.
struct Proposition {
  ClaimType type = ClaimType::Existence;
  std::vector<std::string> categories;  // 1, or 2 for position
  std::optional<int> count;
  std::optional<std::string> color;
  std::optional<Relation> relation;
  bool negated = false;
};

/// Nullopt when the text names no known category or lacks the attribute its
/// type needs.
std::optional<Proposition> parse_proposition(std::string_view text, std::optional<ClaimType> type = std::nullopt,
                                             const Lexicon& lexicon = Lexicon::builtin());

/// Truth of a proposition in the scene (negation applied). Nullopt when it
/// cannot be decided, e.g. a color asked of an absent or repeated category.
std::optional<bool> evaluate(const SceneSpec& scene, const Proposition& p);

/// Claim text for a question proposition, affirming or denying it.
std::string claim_text(const Proposition& p, bool affirm);
Claim make_claim(const Proposition& p, bool affirm);

/// Questions as pipeline inputs. Sample IDs are "s<seed>_q<i>_<type>".
std::vector<LabeledSample> scene_samples(const SceneSpec& scene);

/// Segmentation backend answering from the scene: every instance of the
/// prompted category at score 0.99 with its box mask, subject to the noise knobs.
class OracleGrounder : public SegmentationBackend {
 public:
  OracleGrounder(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options, std::uint64_t seed);
  SegmentResponse segment(const SegmentRequest& request) override;
  std::string describe() const override { return "synthetic-grounder"; }

 private:
  std::shared_ptr<const SceneSpec> scene_;
  SyntheticOptions options_;
  std::uint64_t seed_;
};

/// Answers init, yes-guard and direct prompts. The answer is wrong with
/// probability init_wrong_rate (seeded per question); the claim always
/// affirms the question.
class SyntheticInitializer : public ChatBackend {
 public:
  SyntheticInitializer(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options, std::uint64_t seed);
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override { return "synthetic-initializer"; }

  /// Whether the initial answer for `question` is deliberately wrong.
  bool wrong_for(std::string_view question) const;

 private:
  std::shared_ptr<const SceneSpec> scene_;
  SyntheticOptions options_;
  std::uint64_t seed_;
};

/// Judge per judge_mode. In oracle mode each claim is evaluated against the
/// scene (confidence 0.99, citing the relevant evidence IDs of the prompt);
/// with judge_noise p a decisive status is flipped with probability p and its
/// confidence drawn from [judge_noise_conf_min, judge_noise_conf_max).
class SyntheticJudge : public ChatBackend {
 public:
  SyntheticJudge(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options, std::uint64_t seed);
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override { return "synthetic-judge"; }

 private:
  std::shared_ptr<const SceneSpec> scene_;
  SyntheticOptions options_;
  std::uint64_t seed_;
};

/// Proposes the answer implied by the first decisive check of the current
/// round (regardless of confidence), else the previous answer, plus one claim
/// consistent with the proposal.
class SyntheticRefiner : public ChatBackend {
 public:
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override { return "synthetic-refiner"; }
};

/// Color and count observations read off the scene.
class SyntheticObserver : public ChatBackend {
 public:
  explicit SyntheticObserver(std::shared_ptr<const SceneSpec> scene) : scene_(std::move(scene)) {}
  ChatResponse chat(const ChatRequest& request) override;
  std::string describe() const override { return "synthetic-observer"; }

 private:
  std::shared_ptr<const SceneSpec> scene_;
};

BackendSet synthetic_backends(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options,
                              std::uint64_t seed);

/// Seed of the i-th scene of a run.
std::uint64_t scene_seed(std::uint64_t run_seed, int index);

}  // namespace kestrel::synthetic
