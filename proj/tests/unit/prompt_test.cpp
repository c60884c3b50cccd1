#include <gtest/gtest.h>

#include "kestrel/backends.hpp"
#include "kestrel/error.hpp"
#include "kestrel/prompt.hpp"
#include "test_util.hpp"

namespace kestrel {
namespace {

using nlohmann::json;

ImageData small_image(Rgb fill = {10, 20, 30}) { return ImageData::of(Image(8, 6, fill)); }

TEST(Templates, BuiltinsCarryVersions) {
  const auto v = Templates::builtin().versions();
  for (const char* name : {"init", "yes_guard", "verify", "refine", "color_observe", "count_vision", "direct_answer"}) {
    ASSERT_TRUE(v.count(name)) << name;
    EXPECT_GE(v.at(name), 1);
  }
}

TEST(Templates, HeaderIsRequired) {
  const auto t = parse_template_file("## template: verify version: 4\nbody {question}\n");
  EXPECT_EQ(t.name, "verify");
  EXPECT_EQ(t.version, 4);
  EXPECT_EQ(t.body.find("##"), std::string::npos);
  EXPECT_THROW(parse_template_file("no header\n"), Error);
}

TEST(Templates, DirectoryOverridesOneTemplate) {
  testing::TempDir dir;
  testing::write_file(dir / "direct_answer.txt", "## template: direct_answer version: 9\nQ={question} {not_a_placeholder}\n");
  const auto t = Templates::from_directory(dir.path());
  EXPECT_EQ(t.versions().at("direct_answer"), 9);
  EXPECT_EQ(t.versions().at("verify"), Templates::builtin().versions().at("verify"));
  EXPECT_EQ(t.render(TemplateId::DirectAnswer, {{"question", "\"{question}\""}}),
            "Q=\"{question}\" {not_a_placeholder}");
}

TEST(Templates, OptionalLinesDropAndRequiredThrow) {
  const auto& t = Templates::builtin();
  const std::map<std::string, std::string> base = {
      {"question", "\"q\""}, {"expected_claim_type", "count"}, {"example_targets", "[\"cup\"]"}};
  const auto without = t.render(TemplateId::Init, base);
  EXPECT_EQ(without.find("PrevSummary"), std::string::npos);
  auto with = base;
  with["prev_summary"] = "earlier answer was No";
  EXPECT_NE(t.render(TemplateId::Init, with).find("PrevSummary (optional): \"earlier answer was No\""),
            std::string::npos);
  EXPECT_THROW(t.render(TemplateId::Init, {{"question", "\"q\""}}), Error);
}

TEST(Prompts, InitPromptEscapesQuestionAndAttachesImage) {
  Sample s{"s1", {}, "Is the \"red\" car left of the bus?", {}};
  const auto b = build_init_prompt(s, small_image(), ClaimType::Position, std::nullopt);
  EXPECT_EQ(b.image_count(), 1u);
  EXPECT_NE(b.text().find(R"(Question: "Is the \"red\" car left of the bus?")"), std::string::npos);
  EXPECT_NE(b.text().find("\"type\":\"position\""), std::string::npos);
  EXPECT_EQ(example_targets_json("Is the cup to the left of the book?", ClaimType::Position), R"(["cup","book"])");
  EXPECT_EQ(example_targets_json("Is there?", ClaimType::Existence), R"(["..."])");
}

TEST(Prompts, VerifyPromptListsEvidenceAndInterleavesImages) {
  const std::vector<Claim> claims = {{"c1", ClaimType::Count, "There are two cups.", {"cup"}, 1}};
  std::vector<EvidenceItem> ev(2);
  ev[0].id = "e_seg_cup";
  ev[0].etype = EvidenceType::SegOverlay;
  ev[0].image = small_image();
  ev[1].id = "e_count_cup";
  ev[1].etype = EvidenceType::CountText;
  ev[1].text = "segmentation count of 'cup': 3 instance(s)";
  const auto b = build_verify_prompt("Are there two cups?", claims, ev, std::nullopt, small_image({1, 1, 1}));
  EXPECT_EQ(b.image_count(), 1u);  // no context image when evidence has one
  ASSERT_EQ(b.parts.size(), 3u);
  EXPECT_EQ(b.parts[1].kind, ContentPart::Kind::Image);
  const auto text = b.text();
  EXPECT_NE(text.find("[e_seg_cup] (seg_overlay) see attached image"), std::string::npos);
  EXPECT_NE(text.find("[e_count_cup] (count_text) segmentation count"), std::string::npos);
  EXPECT_NE(text.find(R"(EvidenceIDs: ["e_seg_cup","e_count_cup"])"), std::string::npos);
  EXPECT_NE(text.find("e_seg_{tkey}"), std::string::npos);  // literal braces survive
  EXPECT_EQ(text.find("PrevVerdict"), std::string::npos);
}

TEST(Prompts, VerifyPromptContextAndErrors) {
  const std::vector<Claim> claims = {{"c1", ClaimType::Existence, "There is a dog.", {"dog"}, 1}};
  std::vector<EvidenceItem> ev(1);
  ev[0].id = "e_exist_dog";
  ev[0].text = "'dog' not found";
  VerificationReport prev;
  prev.verdict = CheckStatus::Insufficient;
  const auto b = build_verify_prompt("Is there a dog?", claims, ev, prev, small_image());
  EXPECT_EQ(b.image_count(), 1u);
  EXPECT_NE(b.text().find("[context] original image, not citable"), std::string::npos);
  EXPECT_NE(b.text().find("PrevVerdict (optional): {\"checked\":[],\"verdict\":\"insufficient\"}"), std::string::npos);

  EXPECT_THROW(build_verify_prompt("q", {}, ev, std::nullopt), Error);
  std::vector<EvidenceItem> bad(1);
  bad[0].id = "e_crop_dog";
  bad[0].etype = EvidenceType::CropZoom;
  try {
    build_verify_prompt("q", claims, bad, std::nullopt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownEvidenceKind);
  }
}

TEST(Prompts, RefineAndObserverPrompts) {
  Sample s{"s1", {}, "Is there a dog?", {}};
  const auto r = build_refine_prompt(s, small_image(), ClaimType::Existence, BinaryAnswer::Yes, json::array(),
                                     json{{"round", 1}});
  EXPECT_NE(r.text().find("PreviousAnswer: \"Yes\""), std::string::npos);
  EXPECT_NE(r.text().find("CurrentRoundContext: {\"round\":1}"), std::string::npos);
  EXPECT_EQ(build_color_prompt("car", small_image(), small_image()).image_count(), 2u);
  EXPECT_NE(build_count_vision_prompt("cup", small_image()).text().find("cup"), std::string::npos);
}

TEST(Requests, HashIgnoresPurposeButSeesImages) {
  Sample s{"s1", {}, "Is there a dog?", {}};
  auto a = ChatRequest::from_bundle(build_direct_prompt(s, small_image()), "m");
  auto b = a;
  b.purpose = "other";
  EXPECT_EQ(request_hash(a), request_hash(b));
  auto c = ChatRequest::from_bundle(build_direct_prompt(s, small_image({0, 0, 0})), "m");
  EXPECT_NE(request_hash(a), request_hash(c));
  c = a;
  c.model = "n";
  EXPECT_NE(request_hash(a), request_hash(c));
  // Same pixels in a fresh raster hash the same.
  auto d = ChatRequest::from_bundle(build_direct_prompt(s, small_image()), "m");
  EXPECT_EQ(request_hash(a), request_hash(d));
}

}  // namespace
}  // namespace kestrel
