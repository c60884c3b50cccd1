#include "kestrel/synthetic.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>

#include "kestrel/error.hpp"
#include "kestrel/hashing.hpp"
#include "kestrel/lexicon.hpp"
#include "kestrel/records.hpp"
#include "kestrel/refine.hpp"

namespace kestrel::synthetic {

using nlohmann::json;

namespace {

// Ordered by how often each category is placed, most frequent first.
const std::vector<std::string> kCategories = {"cup",  "book", "bottle", "phone", "laptop", "bowl", "plate", "clock",
                                              "lamp", "chair", "vase",  "apple", "car",    "bird", "kite",  "dog"};

const std::vector<std::vector<std::string>> kCooccurrence = {
    {"cup", "bowl", "plate", "bottle", "apple", "vase"},
    {"book", "phone", "laptop", "lamp", "clock", "chair"},
    {"car", "bird", "kite", "dog"},
};

constexpr std::pair<std::string_view, Rgb> kPalette[] = {
    {"red", {220, 30, 30}},     {"orange", {245, 140, 20}}, {"yellow", {240, 220, 30}}, {"green", {40, 170, 60}},
    {"blue", {40, 80, 220}},    {"purple", {130, 50, 180}}, {"pink", {245, 150, 190}},  {"brown", {120, 70, 30}},
    {"black", {20, 20, 20}},    {"white", {245, 245, 245}}, {"gray", {128, 128, 128}}};

constexpr std::array<Relation, 4> kRelations = {Relation::LeftOf, Relation::RightOf, Relation::Above, Relation::Below};

std::string relation_phrase(Relation r) {
  switch (r) {
    case Relation::LeftOf: return "to the left of";
    case Relation::RightOf: return "to the right of";
    case Relation::Above: return "above";
    case Relation::Below: return "below";
    case Relation::Coincident: break;
  }
  return "at";
}

std::string article(const std::string& noun) {
  return std::string("aeiou").find(noun.front()) != std::string::npos ? "an " + noun : "a " + noun;
}

std::string plural(const std::string& noun) { return noun + "s"; }

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

/// Value of `key` on the last line starting with "key: ".
std::optional<std::string> field(std::string_view text, std::string_view key) {
  std::optional<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (line.size() > key.size() + 1 && line.substr(0, key.size()) == key && line[key.size()] == ':') {
      out = trim(line.substr(key.size() + 1));
    }
    pos = end + 1;
  }
  return out;
}

/// A quoted JSON string field ("Question: \"...\"").
std::optional<std::string> quoted_field(std::string_view text, std::string_view key) {
  auto raw = field(text, key);
  if (!raw) return std::nullopt;
  try {
    return json::parse(*raw).get<std::string>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<json> json_field(std::string_view text, std::string_view key) {
  auto raw = field(text, key);
  if (!raw) return std::nullopt;
  auto j = json::parse(*raw, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

/// Text between the first `open` marker and the next quote.
std::optional<std::string> quoted_after(std::string_view text, std::string_view open) {
  auto at = text.find(open);
  if (at == std::string_view::npos) return std::nullopt;
  at += open.size();
  auto end = text.find('\'', at);
  if (end == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(at, end - at));
}

ChatResponse reply(std::string text) {
  ChatResponse r;
  r.completion_tokens = static_cast<int>(tokenize(text).size());
  r.text = std::move(text);
  return r;
}

/// Shared question decoding for the chat roles.
struct QuestionView {
  std::string question;
  ClaimType type = ClaimType::Existence;
  std::optional<Proposition> prop;
};

QuestionView read_question(std::string_view prompt) {
  QuestionView q;
  auto text = quoted_field(prompt, "Question");
  if (!text) throw Error(ErrorCode::InvalidArgument, "synthetic backend: prompt has no Question line");
  q.question = *text;
  q.type = route_claim_type(q.question);
  q.prop = parse_proposition(q.question, q.type);
  return q;
}

}  // namespace

const std::vector<std::string>& categories() { return kCategories; }

const std::vector<std::string>& object_colors() {
  static const std::vector<std::string> colors = [] {
    std::vector<std::string> out;
    for (const auto& c : basic_color_terms()) {
      if (c != "white") out.push_back(c);
    }
    return out;
  }();
  return colors;
}

Rgb palette(std::string_view color) {
  for (const auto& [name, rgb] : kPalette) {
    if (name == color) return rgb;
  }
  throw Error(ErrorCode::InvalidArgument, "no palette entry for color '" + std::string(color) + "'");
}

std::optional<std::string> category_of(std::string_view phrase) {
  const auto tokens = tokenize(phrase);
  for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
    for (const auto& c : kCategories) {
      if (*it == c || *it == plural(c)) return c;
    }
  }
  return std::nullopt;
}

std::vector<const SceneObject*> SceneSpec::instances(std::string_view category) const {
  std::vector<const SceneObject*> out;
  for (const auto& o : objects) {
    if (o.category == category) out.push_back(&o);
  }
  return out;
}

json to_json(const SceneSpec& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"category", o.category},
                       {"color", o.color},
                       {"bbox", {o.bbox.x0, o.bbox.y0, o.bbox.x1, o.bbox.y1}},
                       {"instance_id", o.instance_id}});
  }
  json questions = json::array();
  for (const auto& q : scene.questions) {
    questions.push_back(
        {{"text", q.text}, {"type", std::string(to_string(q.type))}, {"gold", std::string(to_string(q.gold))}});
  }
  return {{"seed", scene.seed},         {"difficulty", scene.difficulty}, {"canvas", {scene.width, scene.height}},
          {"objects", objects}, {"questions", questions}};
}

SceneSpec scene_from_json(const json& j) {
  try {
    SceneSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.difficulty = j.at("difficulty").get<std::string>();
    s.width = j.at("canvas").at(0).get<int>();
    s.height = j.at("canvas").at(1).get<int>();
    for (const auto& o : j.at("objects")) {
      SceneObject obj;
      obj.category = o.at("category").get<std::string>();
      obj.color = o.at("color").get<std::string>();
      const auto& b = o.at("bbox");
      obj.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
      obj.instance_id = o.at("instance_id").get<int>();
      s.objects.push_back(std::move(obj));
    }
    for (const auto& q : j.at("questions")) {
      SceneQuestion sq;
      sq.text = q.at("text").get<std::string>();
      auto t = parse_claim_type(q.at("type").get<std::string>());
      auto g = parse_binary_answer(q.at("gold").get<std::string>());
      if (!t || !g) throw Error(ErrorCode::ParseFailure, "bad question type or gold label");
      sq.type = *t;
      sq.gold = *g;
      s.questions.push_back(std::move(sq));
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("scene json: ") + e.what());
  }
}

std::string claim_text(const Proposition& p, bool affirm) {
  const auto& a = p.categories.at(0);
  switch (p.type) {
    case ClaimType::Existence:
      return affirm ? "There is " + article(a) + " in the image." : "There is no " + a + " in the image.";
    case ClaimType::Count: {
      const int n = p.count.value_or(1);
      const auto noun = n == 1 ? a : plural(a);
      return std::string(n == 1 ? "There is " : "There are ") + (affirm ? "" : "not ") + number_word(n) + " " + noun +
             " in the image.";
    }
    case ClaimType::Color:
      return "The " + a + " is " + (affirm ? "" : "not ") + p.color.value_or("") + ".";
    case ClaimType::Position:
      return "The " + a + " is " + (affirm ? "" : "not ") + relation_phrase(p.relation.value_or(Relation::LeftOf)) +
             " the " + p.categories.at(1) + ".";
  }
  return {};
}

Claim make_claim(const Proposition& p, bool affirm) {
  Claim c;
  c.id = "c1";
  c.type = p.type;
  c.text = claim_text(p, affirm);
  c.targets = {p.categories.at(0)};
  if (p.type == ClaimType::Position) c.targets.push_back(p.categories.at(1));
  return c;
}

std::optional<Proposition> parse_proposition(std::string_view text, std::optional<ClaimType> type,
                                             const Lexicon& lexicon) {
  Proposition p;
  p.type = type.value_or(route_claim_type(text, lexicon));
  const auto tokens = tokenize(text);
  for (const auto& t : tokens) {
    if (auto c = category_of(t)) p.categories.push_back(*c);
    if (lexicon.is_negation(t)) p.negated = !p.negated;
    if (!p.count) {
      if (auto n = lexicon.number_value(t)) p.count = n;
    }
    if (!p.color) {
      if (auto c = lexicon.canonical_color(t)) p.color = c;
    }
  }
  if (auto rel = find_relation(tokens)) p.relation = rel->relation;

  const std::size_t need = p.type == ClaimType::Position ? 2 : 1;
  if (p.categories.size() < need) return std::nullopt;
  p.categories.resize(need);
  if (p.type == ClaimType::Count && !p.count) return std::nullopt;
  if (p.type == ClaimType::Color && !p.color) return std::nullopt;
  if (p.type == ClaimType::Position && (!p.relation || p.categories[0] == p.categories[1])) return std::nullopt;
  return p;
}

std::optional<bool> evaluate(const SceneSpec& scene, const Proposition& p) {
  const auto a = scene.instances(p.categories.at(0));
  std::optional<bool> truth;
  switch (p.type) {
    case ClaimType::Existence: truth = !a.empty(); break;
    case ClaimType::Count:
      if (!p.count) return std::nullopt;
      truth = static_cast<int>(a.size()) == *p.count;
      break;
    case ClaimType::Color:
      if (a.size() != 1 || !p.color) return std::nullopt;
      truth = a.front()->color == *p.color;
      break;
    case ClaimType::Position: {
      const auto b = scene.instances(p.categories.at(1));
      if (a.size() != 1 || b.size() != 1 || !p.relation) return std::nullopt;
      truth = relate(a.front()->bbox, b.front()->bbox) == *p.relation;
      break;
    }
  }
  if (truth && p.negated) truth = !*truth;
  return truth;
}

namespace {

class SceneBuilder {
 public:
  SceneBuilder(std::uint64_t seed, std::string_view difficulty, int width, int height) : rng_(seed) {
    scene_.seed = seed;
    scene_.difficulty = std::string(difficulty);
    scene_.width = width;
    scene_.height = height;
  }

  SceneSpec build() {
    auto pool = kCategories;
    std::shuffle(pool.begin(), pool.end(), rng_);
    const int singletons = std::uniform_int_distribution<int>(2, 4)(rng_);
    const auto counted = pool[0];
    const int copies = std::uniform_int_distribution<int>(1, 4)(rng_);
    for (int i = 0; i < copies; ++i) place(counted);
    std::vector<std::string> single(pool.begin() + 1, pool.begin() + 1 + singletons);
    for (const auto& c : single) place(c);
    for (std::size_t i = 0; i < scene_.objects.size(); ++i) scene_.objects[i].instance_id = static_cast<int>(i);

    existence_question();
    count_question(counted);
    color_question(pick(rng_, single));
    position_question(single);
    return std::move(scene_);
  }

 private:
  bool coin() { return std::bernoulli_distribution(0.5)(rng_); }

  void place(const std::string& category) {
    const int w_max = std::max(8, scene_.width / 6);
    const int h_max = std::max(8, scene_.height / 5);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const int w = std::uniform_int_distribution<int>(std::max(4, w_max / 2), w_max)(rng_);
      const int h = std::uniform_int_distribution<int>(std::max(4, h_max / 2), h_max)(rng_);
      const int x = std::uniform_int_distribution<int>(0, scene_.width - w)(rng_);
      const int y = std::uniform_int_distribution<int>(0, scene_.height - h)(rng_);
      BBox b{x, y, x + w, y + h};
      constexpr int gap = 4;
      const bool clear = std::none_of(scene_.objects.begin(), scene_.objects.end(), [&](const SceneObject& o) {
        return b.x0 < o.bbox.x1 + gap && o.bbox.x0 < b.x1 + gap && b.y0 < o.bbox.y1 + gap && o.bbox.y0 < b.y1 + gap;
      });
      if (!clear) continue;
      scene_.objects.push_back({category, pick(rng_, object_colors()), b, 0});
      return;
    }
    throw Error(ErrorCode::InvalidArgument, "canvas too small to place scene objects");
  }

  bool present(const std::string& c) const { return !scene_.instances(c).empty(); }

  std::string absent_category() {
    std::vector<std::string> absent;
    for (const auto& c : kCategories) {
      if (!present(c)) absent.push_back(c);
    }
    if (scene_.difficulty == "popular") {
      absent.resize(std::min<std::size_t>(absent.size(), 3));
    } else if (scene_.difficulty == "adversarial") {
      std::vector<std::string> plausible;
      for (const auto& group : kCooccurrence) {
        if (std::none_of(group.begin(), group.end(), [&](const std::string& c) { return present(c); })) continue;
        for (const auto& c : group) {
          if (!present(c)) plausible.push_back(c);
        }
      }
      if (!plausible.empty()) absent = std::move(plausible);
    }
    return pick(rng_, absent);
  }

  void add(std::string text, ClaimType type, bool truth) {
    scene_.questions.push_back({std::move(text), type, truth ? BinaryAnswer::Yes : BinaryAnswer::No});
  }

  void existence_question() {
    const bool yes = coin();
    std::string c;
    if (yes) {
      c = pick(rng_, scene_.objects).category;
    } else {
      c = absent_category();
    }
    add("Is there " + article(c) + " in the image?", ClaimType::Existence, yes);
  }

  void count_question(const std::string& c) {
    const int actual = static_cast<int>(scene_.instances(c).size());
    int n = actual;
    if (!coin()) n = (actual == 1 || coin()) ? actual + 1 : actual - 1;
    const auto text = n == 1 ? "Is there one " + c + " in the image?"
                             : "Are there " + number_word(n) + " " + plural(c) + " in the image?";
    add(text, ClaimType::Count, n == actual);
  }

  void color_question(const std::string& c) {
    const auto actual = scene_.instances(c).front()->color;
    std::string asked = actual;
    if (!coin()) {
      while (asked == actual) asked = pick(rng_, object_colors());
    }
    add("Is the " + c + " " + asked + "?", ClaimType::Color, asked == actual);
  }

  void position_question(std::vector<std::string> single) {
    std::shuffle(single.begin(), single.end(), rng_);
    const auto& a = single[0];
    const auto& b = single[1];
    const auto actual = relate(scene_.instances(a).front()->bbox, scene_.instances(b).front()->bbox);
    Relation asked = actual;
    if (!coin()) {
      while (asked == actual) asked = kRelations[std::uniform_int_distribution<std::size_t>(0, 3)(rng_)];
    }
    add("Is the " + a + " " + relation_phrase(asked) + " the " + b + "?", ClaimType::Position, asked == actual);
  }

  std::mt19937_64 rng_;
  SceneSpec scene_;
};

}  // namespace

SceneSpec generate_scene(std::uint64_t seed, std::string_view difficulty, int width, int height) {
  if (difficulty != "random" && difficulty != "popular" && difficulty != "adversarial") {
    throw Error(ErrorCode::InvalidArgument, "unknown difficulty '" + std::string(difficulty) + "'");
  }
  if (width < 64 || height < 64) throw Error(ErrorCode::InvalidArgument, "canvas must be at least 64x64");
  return SceneBuilder(seed, difficulty, width, height).build();
}

Image render_scene(const SceneSpec& scene) {
  Image img(scene.width, scene.height);
  for (const auto& o : scene.objects) img.fill_rect(o.bbox.x0, o.bbox.y0, o.bbox.x1, o.bbox.y1, palette(o.color));
  return img;
}

std::vector<LabeledSample> scene_samples(const SceneSpec& scene) {
  auto image = std::make_shared<const Image>(render_scene(scene));
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < scene.questions.size(); ++i) {
    const auto& q = scene.questions[i];
    LabeledSample s;
    s.sample.sample_id = "s" + std::to_string(scene.seed) + "_q" + std::to_string(i) + "_" + std::string(to_string(q.type));
    s.sample.image = ImageRef(image);
    s.sample.question = q.text;
    s.sample.meta = {{"scene_seed", std::to_string(scene.seed)},
                     {"subset", std::string(to_string(q.type))},
                     {"split", scene.difficulty}};
    s.gold = q.gold;
    out.push_back(std::move(s));
  }
  return out;
}

// ---- backends ----

OracleGrounder::OracleGrounder(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options,
                               std::uint64_t seed)
    : scene_(std::move(scene)), options_(options), seed_(seed) {}

SegmentResponse OracleGrounder::segment(const SegmentRequest& request) {
  const int W = request.image ? request.image.image->width() : scene_->width;
  const int H = request.image ? request.image.image->height() : scene_->height;
  std::mt19937_64 rng(fnv1a64(request.concept_text + "|" + request.image.hash, seed_));
  std::uniform_real_distribution<double> u(0.0, 1.0);

  SegmentResponse out;
  out.model = "synthetic-oracle";
  auto emit = [&](BBox b, double score) {
    b.x1 = std::min(b.x1, W);
    b.y1 = std::min(b.y1, H);
    if (!b.valid() || score < request.min_score) return;
    SegInstance inst;
    inst.score = score;
    inst.bbox = b;
    inst.mask = Mask(W, H);
    inst.mask.fill_box(b);
    out.instances.push_back(std::move(inst));
  };

  if (auto category = category_of(request.concept_text)) {
    for (const auto* o : scene_->instances(*category)) {
      const bool miss = u(rng) < options_.miss_rate;
      const double jitter = options_.score_jitter * u(rng);
      if (!miss) emit(o->bbox, std::max(0.0, 0.99 - jitter));
    }
  }
  if (u(rng) < options_.hallucinate_rate) {
    const int w = std::uniform_int_distribution<int>(8, std::max(8, W / 6))(rng);
    const int h = std::uniform_int_distribution<int>(8, std::max(8, H / 5))(rng);
    const int x = std::uniform_int_distribution<int>(0, std::max(0, W - w))(rng);
    const int y = std::uniform_int_distribution<int>(0, std::max(0, H - h))(rng);
    emit({x, y, x + w, y + h}, 0.36 + 0.6 * u(rng));
  }
  std::stable_sort(out.instances.begin(), out.instances.end(),
                   [](const SegInstance& a, const SegInstance& b) { return a.score > b.score; });
  if (static_cast<int>(out.instances.size()) > request.max_instances) {
    out.instances.resize(static_cast<std::size_t>(std::max(0, request.max_instances)));
  }
  return out;
}

SyntheticInitializer::SyntheticInitializer(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options,
                                           std::uint64_t seed)
    : scene_(std::move(scene)), options_(options), seed_(seed) {}

bool SyntheticInitializer::wrong_for(std::string_view question) const {
  return unit(fnv1a64(question, seed_ ^ 0x5bd1e995ULL)) < options_.init_wrong_rate;
}

ChatResponse SyntheticInitializer::chat(const ChatRequest& request) {
  const auto text = request.text();
  const auto q = read_question(text);
  const auto truth = q.prop ? evaluate(*scene_, *q.prop) : std::nullopt;
  bool yes = truth.value_or(false);
  if (request.purpose == "yes_guard") {
    json out = {{"answer", truth ? (yes ? "yes" : "no") : "unclear"},
                {"confidence", truth ? "high" : "low"},
                {"reason", "read off the rendered scene"}};
    return reply(out.dump());
  }
  if (wrong_for(q.question)) yes = !yes;
  const std::string answer = yes ? "Yes" : "No";
  if (request.purpose == "direct_answer") return reply(answer);
  if (request.purpose != "init") {
    throw Error(ErrorCode::InvalidArgument, "synthetic initializer cannot answer '" + request.purpose + "'");
  }
  json claims = json::array();
  if (q.prop) claims.push_back(to_json(make_claim(*q.prop, true)));
  return reply(json{{"answer", answer}, {"verifiable_claims", claims}}.dump());
}

SyntheticJudge::SyntheticJudge(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options,
                               std::uint64_t seed)
    : scene_(std::move(scene)), options_(options), seed_(seed) {}

namespace {

std::vector<std::string> relevant_prefixes(const Claim& claim) {
  std::vector<std::string> out;
  std::vector<std::string> keys;
  for (const auto& t : claim.targets) {
    try {
      keys.push_back(TargetKey::from_phrase(t).str());
    } catch (const Error&) {
    }
  }
  auto per_target = [&](std::initializer_list<const char*> kinds) {
    for (const auto* k : kinds) {
      for (const auto& key : keys) out.push_back(std::string(k) + key);
    }
  };
  switch (claim.type) {
    case ClaimType::Existence: per_target({"e_exist_", "e_seg_", "e_crop_"}); break;
    case ClaimType::Count: per_target({"e_countcmp_", "e_count_", "e_countviscmp_", "e_countvis_", "e_seg_"}); break;
    case ClaimType::Color: per_target({"e_color_", "e_crop_"}); break;
    case ClaimType::Position:
      out.push_back("e_posrel_" + claim.id);
      per_target({"e_pos_"});
      break;
  }
  return out;
}

/// `id` is `base` or a suffixed variant of it (_r2, _r2_1, _2).
bool id_matches(const std::string& id, const std::string& base) {
  if (id.compare(0, base.size(), base) != 0) return false;
  if (id.size() == base.size()) return true;
  if (id[base.size()] != '_' || id.size() == base.size() + 1) return false;
  const char next = id[base.size() + 1];
  return next == 'r' || (next >= '0' && next <= '9');
}

std::vector<std::string> citations_for(const Claim& claim, const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  for (const auto& base : relevant_prefixes(claim)) {
    for (const auto& id : ids) {
      if (id_matches(id, base) && std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    }
  }
  return out;
}

}  // namespace

ChatResponse SyntheticJudge::chat(const ChatRequest& request) {
  if (request.purpose != "verify") {
    throw Error(ErrorCode::InvalidArgument, "synthetic judge cannot answer '" + request.purpose + "'");
  }
  const auto text = request.text();
  const auto claims_json = json_field(text, "Claims");
  const auto ids_json = json_field(text, "EvidenceIDs");
  if (!claims_json || !claims_json->is_array()) throw Error(ErrorCode::InvalidArgument, "verify prompt without claims");
  std::vector<std::string> ids;
  if (ids_json && ids_json->is_array()) ids = ids_json->get<std::vector<std::string>>();

  json checked = json::array();
  bool any_contradicted = false;
  bool all_supported = true;
  for (const auto& cj : *claims_json) {
    const auto claim = claim_from_json(cj);
    const auto cites = citations_for(claim, ids);
    CheckStatus status = CheckStatus::Insufficient;
    double confidence = 0.5;
    std::string why = "no relevant evidence";
    json citations = json::array();
    if (options_.judge_mode == "always_supported") {
      status = CheckStatus::Supported;
      confidence = 0.99;
      why = "accepted";
      if (!cites.empty()) {
        citations.push_back(cites.front());
      } else if (!ids.empty()) {
        citations.push_back(ids.front());
      }
    } else if (options_.judge_mode == "always_insufficient") {
      why = "evidence is ambiguous";
    } else if (!cites.empty()) {
      auto prop = parse_proposition(claim.text, claim.type);
      auto truth = prop ? evaluate(*scene_, *prop) : std::nullopt;
      if (truth) {
        status = *truth ? CheckStatus::Supported : CheckStatus::Contradicted;
        confidence = 0.99;
        why = *truth ? "evidence agrees with the claim" : "evidence refutes the claim";
        citations = cites;
        const auto h = fnv1a64(claim.text + "|" + request_hash(request), seed_);
        if (options_.judge_noise > 0.0 && unit(h) < options_.judge_noise) {
          status = *truth ? CheckStatus::Contradicted : CheckStatus::Supported;
          const double u = unit(fnv1a64("conf", h));
          confidence = options_.judge_noise_conf_min + u * (options_.judge_noise_conf_max - options_.judge_noise_conf_min);
          why = "misread evidence";
        }
      } else {
        why = "claim cannot be decided";
      }
    }
    any_contradicted = any_contradicted || status == CheckStatus::Contradicted;
    all_supported = all_supported && status == CheckStatus::Supported;
    checked.push_back({{"claim_id", claim.id},
                       {"status", std::string(to_string(status))},
                       {"confidence", confidence},
                       {"why", why},
                       {"citations", citations}});
  }
  const auto verdict = any_contradicted ? CheckStatus::Contradicted
                       : all_supported  ? CheckStatus::Supported
                                        : CheckStatus::Insufficient;
  return reply(json{{"verdict", std::string(to_string(verdict))}, {"checked", checked}}.dump());
}

ChatResponse SyntheticRefiner::chat(const ChatRequest& request) {
  if (request.purpose != "refine") {
    throw Error(ErrorCode::InvalidArgument, "synthetic refiner cannot answer '" + request.purpose + "'");
  }
  const auto text = request.text();
  const auto q = read_question(text);
  auto prev = parse_binary_answer(quoted_field(text, "PreviousAnswer").value_or("No")).value_or(BinaryAnswer::No);
  BinaryAnswer proposal = prev;

  if (auto ctx = json_field(text, "CurrentRoundContext")) {
    std::vector<Claim> claims;
    for (const auto& c : ctx->value(json::json_pointer("/hypothesis/claims"), json::array())) claims.push_back(claim_from_json(c));
    for (const auto& check : ctx->value(json::json_pointer("/verify/checked"), json::array())) {
      const auto status = parse_check_status(check.value("status", ""));
      if (!status || *status == CheckStatus::Insufficient) continue;
      const auto id = check.value("claim_id", "");
      auto it = std::find_if(claims.begin(), claims.end(), [&](const Claim& c) { return c.id == id; });
      if (it == claims.end()) continue;
      if (auto a = implied_answer(*status, claim_stance(*it, q.question))) {
        proposal = *a;
        break;
      }
    }
  }
  json new_claims = json::array();
  if (q.prop) {
    auto c = to_json(make_claim(*q.prop, proposal == BinaryAnswer::Yes));
    c["priority"] = 1;
    new_claims.push_back(std::move(c));
  }
  return reply(json{{"new_claims", new_claims}, {"Answer", std::string(to_string(proposal))}}.dump());
}

ChatResponse SyntheticObserver::chat(const ChatRequest& request) {
  const auto text = request.text();
  if (request.purpose == "color_observe") {
    const auto target = quoted_after(text, "detected '").value_or("");
    const auto category = category_of(target);
    const auto found = category ? scene_->instances(*category) : std::vector<const SceneObject*>{};
    if (found.empty()) return reply("I cannot make out the object.");
    return reply("The " + target + " is " + found.front()->color + ".");
  }
  if (request.purpose == "count_vision") {
    const auto target = quoted_after(text, "candidate '").value_or("");
    const auto category = category_of(target);
    return reply(std::to_string(category ? scene_->instances(*category).size() : 0));
  }
  throw Error(ErrorCode::InvalidArgument, "synthetic observer cannot answer '" + request.purpose + "'");
}

BackendSet synthetic_backends(std::shared_ptr<const SceneSpec> scene, const SyntheticOptions& options,
                              std::uint64_t seed) {
  BackendSet b;
  b.initializer = std::make_shared<SyntheticInitializer>(scene, options, seed);
  b.judge = std::make_shared<SyntheticJudge>(scene, options, seed);
  b.refiner = std::make_shared<SyntheticRefiner>();
  b.color_observer = std::make_shared<SyntheticObserver>(scene);
  b.grounder = std::make_shared<OracleGrounder>(scene, options, seed);
  return b;
}

std::uint64_t scene_seed(std::uint64_t run_seed, int index) {
  return fnv1a64(std::to_string(run_seed) + ":" + std::to_string(index)) & 0xffffffffffffULL;
}

}  // namespace kestrel::synthetic
