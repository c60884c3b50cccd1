#include <gtest/gtest.h>

#include <random>

#include "kestrel/error.hpp"
#include "kestrel/evidence.hpp"
#include "kestrel/lexicon.hpp"
#include "kestrel/synthetic.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

GroundingResult grounded(std::string target, std::vector<BBox> boxes, int w = 60, int h = 40, double score = 0.9) {
  GroundingResult r;
  r.target = target;
  r.tkey = TargetKey::from_phrase(target);
  r.threshold_used = 0.5;
  for (const auto& b : boxes) {
    GroundedInstance g;
    g.score = score;
    g.bbox = b;
    g.mask = Mask(w, h);
    g.mask.fill_box(b);
    r.instances.push_back(g);
    r.raw_scores.push_back(score);
  }
  return r;
}

bool contains_word(const std::string& text, const std::string& word) {
  return text.find(word) != std::string::npos;
}

TEST(EvidenceIds, PrefixesAndScope) {
  EXPECT_EQ(make_evidence_id(EvidenceType::SegOverlay, "dog"), "e_seg_dog");
  EXPECT_EQ(make_evidence_id(EvidenceType::CountVisionCompareText, "cup"), "e_countviscmp_cup");
  EXPECT_EQ(make_evidence_id(EvidenceType::PositionRelationText, "c2"), "e_posrel_c2");
  try {
    make_evidence_id(EvidenceType::ColorText, " ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingScope);
  }
}

TEST(Registry, ReusesIdenticalContentAndSuffixesNewContent) {
  EvidenceRegistry reg;
  EvidenceItem a;
  a.id = "e_exist_dog";
  a.text = "no instance of 'dog' detected at threshold 0.50.";
  EXPECT_EQ(reg.add(a, 1), "e_exist_dog");
  EXPECT_EQ(reg.add(a, 2), "e_exist_dog");
  auto b = a;
  b.text = "1 instance(s) of 'dog' found (max score 0.40).";
  EXPECT_EQ(reg.add(b, 2), "e_exist_dog_r2");
  auto c = a;
  c.text = "something else";
  EXPECT_EQ(reg.add(c, 2), "e_exist_dog_r2_2");
  EXPECT_EQ(reg.add(b, 3), "e_exist_dog_r2");
  EXPECT_EQ(reg.size(), 3u);
  EXPECT_EQ(reg.round_ids(2), (std::vector<std::string>{"e_exist_dog", "e_exist_dog_r2", "e_exist_dog_r2_2"}));
  EXPECT_EQ(reg.new_ids(2), (std::vector<std::string>{"e_exist_dog_r2", "e_exist_dog_r2_2"}));
  EXPECT_TRUE(reg.new_ids(3).empty());
  EXPECT_EQ(reg.find("e_exist_dog_r2")->round, 2);
}

// The word "found" appears exactly when there is at least one instance.
TEST(Derive, ExistenceWordingProperty) {
  std::mt19937 rng(71);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = testing::uniform_int(rng, 0, 3);
    std::vector<BBox> boxes;
    for (int i = 0; i < n; ++i) boxes.push_back({i * 10, 0, i * 10 + 5, 5});
    auto r = grounded("fire hydrant", boxes);
    r.rechecked = rng() & 1;
    const auto e = derive_existence(r);
    EXPECT_EQ(e.id, "e_exist_fire_hydrant");
    EXPECT_EQ(contains_word(e.text, "found"), n > 0) << e.text;
    EXPECT_EQ(contains_word(e.text, "detected"), n == 0) << e.text;
  }
}

TEST(Derive, CountAndComparison) {
  const auto r = grounded("cup", {{0, 0, 5, 5}, {10, 0, 15, 5}, {20, 0, 25, 5}});
  auto items = derive_count(r, 2, 16);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].id, "e_count_cup");
  EXPECT_EQ(items[0].text, "segmentation count of 'cup': 3 instance(s) at threshold 0.50.");
  EXPECT_EQ(items[1].id, "e_countcmp_cup");
  EXPECT_EQ(items[1].text, "segmentation count 3 disagrees with claimed 2.");
  EXPECT_EQ(derive_count(r, std::nullopt, 16).size(), 1u);
  auto sat = r;
  sat.saturated = true;
  EXPECT_NE(derive_count(sat, 3, 3)[0].text.find("at least 3"), std::string::npos);
  const auto vis = derive_count_vision(r, 3, 3);
  EXPECT_EQ(vis[1].text, "visual count 3 agrees with claimed 3.");
}

TEST(Derive, ColorNeedsAnInstance) {
  EXPECT_THROW(derive_color(grounded("car", {}), "red", "red"), Error);
  Image img(60, 40, {255, 255, 255});
  img.fill_rect(0, 0, 10, 10, synthetic::palette("blue"));
  const auto e = derive_color_fallback(img, grounded("car", {{0, 0, 10, 10}}));
  EXPECT_EQ(e.id, "e_color_car");
  EXPECT_NE(e.text.find("blue"), std::string::npos);
}

TEST(Derive, HueBucketRecoversEveryPaletteColor) {
  for (const auto& c : basic_color_terms()) EXPECT_EQ(hue_bucket(synthetic::palette(c)), c);
}

TEST(Derive, PositionCellsAndRelation) {
  const std::vector<GroundingResult> rs = {grounded("cup", {{0, 0, 10, 10}}, 90, 90),
                                           grounded("book", {{70, 70, 90, 90}}, 90, 90)};
  const Claim c{"c3", ClaimType::Position, "The cup is left of the book.", {"cup", "book"}, 1};
  const auto items = derive_position(90, 90, rs, c);
  ASSERT_EQ(items.size(), 3u);
  EXPECT_EQ(items[0].id, "e_pos_cup");
  EXPECT_NE(items[0].text.find("left-top"), std::string::npos);
  EXPECT_EQ(items[2].id, "e_posrel_c3");
  EXPECT_NE(items[2].text.find("'cup' is left of 'book'"), std::string::npos) << items[2].text;

  const std::vector<GroundingResult> missing = {rs[0], grounded("book", {}, 90, 90)};
  const auto none = derive_position(90, 90, missing, c);
  EXPECT_NE(none.back().text.find("undeterminable"), std::string::npos);
}

struct GatherFixture : ::testing::Test {
  GateConfig gates;
  GroundingOptions grounding;
  LoopOptions loop;
  EvidenceContext ctx() {
    EvidenceContext c;
    c.image = ImageData::of(Image(60, 40, {255, 255, 255}));
    c.gates = &gates;
    c.grounding = &grounding;
    c.loop = &loop;
    c.templates = &Templates::builtin();
    c.lexicon = &Lexicon::builtin();
    return c;
  }
};

TEST_F(GatherFixture, ExistenceRoundAndEscalation) {
  const std::map<std::string, GroundingResult> g = {{"dog", grounded("dog", {{5, 5, 20, 20}, {30, 5, 50, 30}})}};
  const std::vector<Claim> claims = {{"c1", ClaimType::Existence, "There is a dog.", {"dog"}, 1}};
  EvidenceRegistry reg;
  auto c = ctx();
  const auto r1 = gather_evidence(c, claims, g, false, 1, reg);
  EXPECT_EQ(r1.ids, (std::vector<std::string>{"e_seg_dog", "e_crop_dog", "e_exist_dog"}));
  const auto r2 = gather_evidence(c, claims, g, true, 2, reg);
  EXPECT_EQ(reg.new_ids(2), std::vector<std::string>{"e_crop_dog_2"});
  EXPECT_EQ(r2.ids.size(), 4u);
}

TEST_F(GatherFixture, TextualAblationKeepsVisualEvidence) {
  gates.use_textual_evidence[ClaimType::Count] = false;
  const std::map<std::string, GroundingResult> g = {{"cup", grounded("cup", {{5, 5, 20, 20}})}};
  const std::vector<Claim> claims = {{"c1", ClaimType::Count, "There are two cups.", {"cup"}, 1}};
  EvidenceRegistry reg;
  const auto r = gather_evidence(ctx(), claims, g, false, 1, reg);
  EXPECT_EQ(r.ids, std::vector<std::string>{"e_seg_cup"});
}

TEST_F(GatherFixture, ObserverFailuresFallBack) {
  LambdaChatBackend observer([](const ChatRequest&) -> std::string {
    throw Error(ErrorCode::BackendUnavailable, "down");
  });
  auto c = ctx();
  c.observer = &observer;
  const std::map<std::string, GroundingResult> g = {{"car", grounded("car", {{5, 5, 20, 20}})}};
  const std::vector<Claim> claims = {{"c1", ClaimType::Color, "The car is red.", {"car"}, 1}};
  EvidenceRegistry reg;
  const auto r = gather_evidence(c, claims, g, false, 1, reg);
  EXPECT_NE(reg.find("e_color_car")->text.find("low-fidelity"), std::string::npos);
  EXPECT_TRUE(std::any_of(r.events.begin(), r.events.end(), [](const TraceEvent& e) { return e.kind == "observer_error"; }));
}

}  // namespace
}  // namespace kestrel
